"""Joint training loop: retrieve, score with the LM, build the target,
update the retriever.

Index-maintenance strategies:
  fixed         no retriever updates (baseline);
  query_side    only the query encoder trains, the index never goes stale;
  rerank        retrieve top-L from the (possibly stale) index, re-embed
                those L documents with the current parameters, keep top-K;
  full_refresh  train everything and rebuild the index every R steps.

The optimizer is plain SGD with linear warmup and linear decay. With a
fixed seed, configuration and corpus, the parameter trajectory and the
emitted metrics are bit-identical across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import index as index_mod
from .corpus import Passage, exclude_self
from .lm import LMScorer, OverlapLM
from .losses import (LossKind, build_target, distill_step, emdr2_objective)
from .pretext import PretextExample
from .retriever import (DEFAULT_TEMPERATURE, DualEncoder, Gradients,
                        _backprop_side, encode_doc, encode_query,
                        retrieval_distribution)


class MaintenanceMode(str, Enum):
    FIXED = "fixed"
    QUERY_SIDE = "query_side"
    RERANK = "rerank"
    FULL_REFRESH = "full_refresh"


class RefreshAction(str, Enum):
    NONE = "none"
    FULL_REBUILD = "full_rebuild"
    RERANK_ONLY = "rerank_only"


@dataclass(frozen=True)
class TrainConfig:
    k_retrieved: int = 20
    l_rerank_pool: int = 100
    refresh_interval: int = 1000
    batch_size: int = 8
    temperature: float = DEFAULT_TEMPERATURE
    temperature_target: float = 1.0
    loss: LossKind = LossKind.PDIST
    mode: MaintenanceMode = MaintenanceMode.QUERY_SIDE
    steps: int = 100
    learning_rate: float = 1e-2
    warmup_steps: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mode == MaintenanceMode.RERANK and self.l_rerank_pool < self.k_retrieved:
            raise ValueError("rerank pool L must be >= K")
        if self.mode == MaintenanceMode.FULL_REFRESH and self.refresh_interval < 1:
            raise ValueError("refresh_interval must be >= 1")
        # k_retrieved == 0 is the closed-book ablation: no retrieval, no
        # training signal; the harness still runs end to end.


@dataclass
class TrainExample:
    """A (query, output) supervision pair; origin_passage_id, when set,
    is excluded from its own retrieval results."""
    query: tuple[str, ...]
    output: tuple[str, ...]
    origin_passage_id: str = ""
    gold_passage_id: str = ""

    @classmethod
    def from_pretext(cls, ex: PretextExample) -> "TrainExample":
        return cls(query=ex.retrieval_query(), output=ex.output,
                   origin_passage_id=ex.origin_passage_id)


@dataclass
class TrainerState:
    encoder: DualEncoder
    index: index_mod.EmbeddingIndex
    passages: dict[str, Passage]
    step: int = 0
    stale_rerank_warnings: int = 0
    _row_cache: tuple[int, dict[str, int]] | None = None

    def index_rows(self) -> dict[str, int]:
        if self._row_cache is None or self._row_cache[0] != self.index.version:
            self._row_cache = (self.index.version,
                               {pid: i for i, pid in enumerate(self.index.ids)})
        return self._row_cache[1]


@dataclass
class StepMetrics:
    step: int
    loss: float
    recall_at_1: float
    index_version: int


def refresh_policy(step: int, cfg: TrainConfig) -> RefreshAction:
    """full_refresh rebuilds every R steps; rerank re-embeds candidates at
    every step; query_side and fixed never touch the index."""
    if cfg.mode == MaintenanceMode.FULL_REFRESH:
        if step % cfg.refresh_interval == 0:
            return RefreshAction.FULL_REBUILD
        return RefreshAction.NONE
    if cfg.mode == MaintenanceMode.RERANK:
        return RefreshAction.RERANK_ONLY
    return RefreshAction.NONE


def _learning_rate(cfg: TrainConfig, step: int) -> float:
    """Linear warmup over warmup_steps, then linear decay to zero."""
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return cfg.learning_rate * step / cfg.warmup_steps
    remaining = max(cfg.steps - step, 0)
    span = max(cfg.steps - cfg.warmup_steps, 1)
    return cfg.learning_rate * remaining / span


def _retrieve(state: TrainerState, cfg: TrainConfig,
              example: TrainExample) -> list[str]:
    """Candidate document ids for one example, honoring the maintenance
    mode and self-exclusion."""
    q_vec = encode_query(state.encoder, example.query)
    extra = 1 if example.origin_passage_id else 0
    if cfg.mode == MaintenanceMode.RERANK:
        pool = index_mod.search(state.index, q_vec, cfg.l_rerank_pool + extra)
        stale_ids = [pid for pid, _ in pool]
        fresh = [(pid, float(np.dot(q_vec, encode_doc(state.encoder,
                                                      state.passages[pid].text))))
                 for pid in stale_ids]
        fresh.sort(key=lambda t: (-t[1], t[0]))
        ids = [pid for pid, _ in fresh]
        # Stale-index signal: a fresh top-K element coming from the tail of
        # the stale pool suggests the true top-K may have escaped it.
        tail = set(stale_ids[cfg.l_rerank_pool - 1:])
        if set(ids[:cfg.k_retrieved]) & tail:
            state.stale_rerank_warnings += 1
    else:
        results = index_mod.search(state.index, q_vec, cfg.k_retrieved + extra)
        ids = [pid for pid, _ in results]
    if example.origin_passage_id:
        ids = [pid for pid in ids if pid != example.origin_passage_id]
    return ids[:cfg.k_retrieved]


def _example_gradient(state: TrainerState, cfg: TrainConfig, lm: LMScorer,
                      example: TrainExample) -> tuple[Gradients | None, float, list[str]]:
    """Loss gradient (None when frozen), loss value, retrieved ids."""
    ids = _retrieve(state, cfg, example)
    if not ids:
        return None, 0.0, ids
    docs = [tuple(state.passages[pid].text) for pid in ids]
    q_vec = encode_query(state.encoder, example.query)
    if cfg.mode in (MaintenanceMode.FIXED, MaintenanceMode.QUERY_SIDE):
        # The index is never stale in these modes; its vectors are the
        # document embeddings.
        row = state.index_rows()
        d_vecs = state.index.vectors[[row[pid] for pid in ids]]
    else:
        d_vecs = np.stack([encode_doc(state.encoder, d) for d in docs])
    probs = retrieval_distribution(d_vecs @ q_vec, cfg.temperature)

    if cfg.loss == LossKind.EMDR2:
        logliks = lm.per_doc_loglik(example.query, docs, example.output)
        step = emdr2_objective(logliks, probs, cfg.temperature)
        loss_value = -step.value
    else:
        target = build_target(cfg.loss, lm, example.query, docs,
                              example.output, cfg.temperature_target)
        step = distill_step(target, probs, cfg.temperature)
        loss_value = step.value

    if cfg.mode == MaintenanceMode.FIXED:
        return None, loss_value, ids

    grads = Gradients.zeros_like(state.encoder)
    g_scores = step.grad_wrt_scores
    grad_q_vec = g_scores @ d_vecs
    _backprop_side(state.encoder.query, state.encoder.vocab, example.query,
                   grad_q_vec, grads.query_embedding, grads.query_projection)
    if cfg.mode in (MaintenanceMode.RERANK, MaintenanceMode.FULL_REFRESH):
        for g_k, doc in zip(g_scores, docs):
            _backprop_side(state.encoder.doc, state.encoder.vocab, doc,
                           g_k * q_vec, grads.doc_embedding,
                           grads.doc_projection)
    return grads, loss_value, ids


def train_step(state: TrainerState, batch: Sequence[TrainExample],
               cfg: TrainConfig, lm: LMScorer) -> StepMetrics:
    """One optimizer step over a batch. Rebuilds run strictly between
    steps, before the batch is processed."""
    state.step += 1
    if refresh_policy(state.step, cfg) == RefreshAction.FULL_REBUILD:
        state.index = index_mod.build(
            list(state.passages.values()), state.encoder,
            shards=state.index.shards, precision=state.index.precision,
            previous_version=state.index.version)

    total = Gradients.zeros_like(state.encoder)
    losses, hits, with_gold = [], 0, 0
    for example in batch:
        if cfg.k_retrieved == 0:
            continue  # closed-book ablation: nothing to retrieve or train
        grads, loss_value, ids = _example_gradient(state, cfg, lm, example)
        losses.append(loss_value)
        if example.gold_passage_id:
            with_gold += 1
            hits += int(bool(ids) and ids[0] == example.gold_passage_id)
        if grads is not None:
            total.add_scaled(grads, 1.0 / len(batch))

    if cfg.mode != MaintenanceMode.FIXED and cfg.k_retrieved > 0:
        lr = _learning_rate(cfg, state.step)
        state.encoder.query.embedding -= lr * total.query_embedding
        state.encoder.query.projection -= lr * total.query_projection
        if cfg.mode in (MaintenanceMode.RERANK, MaintenanceMode.FULL_REFRESH):
            state.encoder.doc.embedding -= lr * total.doc_embedding
            state.encoder.doc.projection -= lr * total.doc_projection

    return StepMetrics(
        step=state.step,
        loss=float(np.mean(losses)) if losses else 0.0,
        recall_at_1=hits / with_gold if with_gold else 0.0,
        index_version=state.index.version,
    )


def init_state(encoder: DualEncoder, passages: Sequence[Passage],
               shards: int = 1) -> TrainerState:
    idx = index_mod.build(list(passages), encoder, shards=shards)
    return TrainerState(encoder=encoder, index=idx,
                        passages={p.id: p for p in passages})


def train(state: TrainerState, examples: Sequence[TrainExample],
          cfg: TrainConfig, lm: LMScorer | None = None,
          on_step: Callable[[StepMetrics], None] | None = None) -> list[StepMetrics]:
    """Run cfg.steps optimizer steps, cycling deterministically through a
    seed-shuffled example order."""
    if lm is None:
        lm = OverlapLM(vocab_size=len(state.encoder.vocab))
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(examples))
    history = []
    cursor = 0
    for _ in range(cfg.steps):
        batch = []
        for _ in range(cfg.batch_size):
            batch.append(examples[order[cursor % len(examples)]])
            cursor += 1
        metrics = train_step(state, batch, cfg, lm)
        history.append(metrics)
        if on_step:
            on_step(metrics)
    return history


def recall_at_1(state: TrainerState, examples: Sequence[TrainExample],
                cfg: TrainConfig) -> float:
    """Fraction of examples whose top retrieved passage is their gold."""
    hits = 0
    for ex in examples:
        ids = _retrieve(state, cfg, ex)
        hits += int(bool(ids) and ids[0] == ex.gold_passage_id)
    return hits / len(examples)


def write_metrics_csv(history: Sequence[StepMetrics], path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "recall_at_1", "index_version"])
        for m in history:
            writer.writerow([m.step, f"{m.loss:.10g}",
                             f"{m.recall_at_1:.6g}", m.index_version])
