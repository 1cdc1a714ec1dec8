"""Language-model scoring contract and the built-in analytic toy LM.

Every distillation loss consumes four quantities from the reader: the
per-document conditional log-likelihood of the output, the joint
log-likelihood given the whole retrieved set, the leave-one-out joint
log-likelihoods, and a nonnegative per-document attention relevance.

The built-in stand-in is a smoothed unigram-overlap model: the
probability of an output token given a document mixes the token's
in-document frequency with a uniform vocabulary floor,

    p(t | d) = lam * count_d(t) / |d| + (1 - lam) / |V|.

Conditioning on a document set pools the token counts of all documents,
matching the composition semantics where every document contributes to a
single fused context. The query does not enter the counts.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

TokenSeq = Sequence[str]


class LMScorer(Protocol):
    def per_doc_loglik(self, query: TokenSeq, docs: Sequence[TokenSeq],
                       output: TokenSeq) -> list[float]: ...

    def joint_loglik(self, query: TokenSeq, docs: Sequence[TokenSeq],
                     output: TokenSeq) -> float: ...

    def loo_logliks(self, query: TokenSeq, docs: Sequence[TokenSeq],
                    output: TokenSeq) -> list[float]: ...

    def attention_relevance(self, query: TokenSeq, docs: Sequence[TokenSeq],
                            output: TokenSeq) -> list[float]: ...


@dataclass
class OverlapLM:
    vocab_size: int
    smoothing: float = 0.5

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if not (0.0 < self.smoothing < 1.0):
            raise ValueError("smoothing must be strictly inside (0,1)")
        self._count_cache: dict[tuple, Counter] = {}

    def _counts(self, doc: TokenSeq) -> Counter:
        # Documents are reused across training steps; memoize their counts
        # (hashable token tuples only).
        if isinstance(doc, tuple):
            cached = self._count_cache.get(doc)
            if cached is None:
                cached = self._count_cache[doc] = Counter(doc)
            return cached
        return Counter(doc)

    def _loglik_from_counts(self, counts: Counter, length: int,
                            output: TokenSeq) -> float:
        floor = (1.0 - self.smoothing) / self.vocab_size
        total = 0.0
        for t in output:
            freq = counts[t] / length if length else 0.0
            total += math.log(self.smoothing * freq + floor)
        return total

    def per_doc_loglik(self, query, docs, output):
        if not output:
            raise ValueError("empty output")
        return [self._loglik_from_counts(self._counts(d), len(d), output)
                for d in docs]

    def joint_loglik(self, query, docs, output):
        if not docs:
            raise ValueError("docs must be nonempty")
        if not output:
            raise ValueError("empty output")
        pooled = Counter()
        length = 0
        for d in docs:
            pooled.update(d)
            length += len(d)
        return self._loglik_from_counts(pooled, length, output)

    def loo_logliks(self, query, docs, output):
        if len(docs) < 2:
            raise ValueError("leave-one-out undefined for K=1")
        # Pooled counts once, then subtract each doc's contribution: O(K)
        # in the document count instead of re-pooling K times.
        pooled = Counter()
        total_len = 0
        for d in docs:
            pooled.update(self._counts(d))
            total_len += len(d)
        floor = (1.0 - self.smoothing) / self.vocab_size
        out = []
        for d in docs:
            counts = self._counts(d)
            length = total_len - len(d)
            loglik = 0.0
            for t in output:
                freq = (pooled[t] - counts[t]) / length if length else 0.0
                loglik += math.log(self.smoothing * freq + floor)
            out.append(loglik)
        return out

    def per_token_logliks(self, query, docs, output):
        """(K, |output|) per-token log factors, for token-level objectives."""
        if not output:
            raise ValueError("empty output")
        floor = (1.0 - self.smoothing) / self.vocab_size
        rows = []
        for d in docs:
            counts, length = self._counts(d), len(d)
            rows.append([
                math.log(self.smoothing * (counts[t] / length if length else 0.0)
                         + floor)
                for t in output
            ])
        return rows

    def attention_relevance(self, query, docs, output):
        """Overlap proxy for aggregated attention mass: the mean over
        output tokens of each token's in-document frequency."""
        if not output:
            raise ValueError("empty output")
        rel = []
        for d in docs:
            if not d:
                rel.append(0.0)
                continue
            counts = self._counts(d)
            rel.append(sum(counts[t] for t in output) / (len(d) * len(output)))
        return rel


class MockScorer:
    """Fixed-value scorer for loss tests; loadable from a JSONL fixture of
    {"doc_id": ..., "loglik": ..., "relevance": ...} records."""

    def __init__(self, logliks: dict[str, float],
                 relevances: dict[str, float] | None = None,
                 joint: float = -1.0):
        self.logliks = logliks
        self.relevances = relevances or {}
        self.joint = joint
        self.doc_ids: Sequence[str] = []

    @classmethod
    def from_jsonl(cls, path) -> "MockScorer":
        logliks, relevances = {}, {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                logliks[obj["doc_id"]] = obj["loglik"]
                if "relevance" in obj:
                    relevances[obj["doc_id"]] = obj["relevance"]
        return cls(logliks, relevances)

    def bind(self, doc_ids: Sequence[str]) -> "MockScorer":
        self.doc_ids = list(doc_ids)
        return self

    def per_doc_loglik(self, query, docs, output):
        return [self.logliks[i] for i in self.doc_ids]

    def joint_loglik(self, query, docs, output):
        return self.joint

    def loo_logliks(self, query, docs, output):
        return [self.joint - self.logliks[i] for i in self.doc_ids]

    def attention_relevance(self, query, docs, output):
        return [self.relevances.get(i, 0.0) for i in self.doc_ids]
