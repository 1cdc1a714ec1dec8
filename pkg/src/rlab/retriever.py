"""Trainable dual encoder.

Queries and documents are embedded independently: mean pooling over a
learned token embedding table followed by an optional linear projection.
Relevance is the dot product of the two embeddings, and the distribution
over a retrieved top-K set is a temperature softmax of the scores.

The query and document sides hold separate parameter sets (tied copies at
initialization) so that query-side-only training can freeze the document
encoder and keep a prebuilt index valid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

UNK = "<unk>"
DEFAULT_TEMPERATURE = 0.1  # tuned retrieval temperature


class TrainMode(str, Enum):
    FIXED = "fixed"
    QUERY_SIDE = "query_side"
    FULL = "full"


class Vocab:
    """Token -> row mapping with a reserved UNK row at index 0."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = [UNK] + sorted(set(tokens) - {UNK})
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def row(self, token: str) -> int:
        return self.index.get(token, 0)

    def rows(self, text: Sequence[str]) -> np.ndarray:
        return np.array([self.row(t) for t in text], dtype=np.int64)


@dataclass
class EncoderParams:
    """One side of the dual encoder: embedding table plus projection."""

    embedding: np.ndarray  # (|V|, d) float64
    projection: np.ndarray  # (d, d)

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.embedding.copy(), self.projection.copy())


@dataclass
class DualEncoder:
    vocab: Vocab
    query: EncoderParams
    doc: EncoderParams

    @property
    def dim(self) -> int:
        return self.query.dim

    def copy(self) -> "DualEncoder":
        return DualEncoder(self.vocab, self.query.copy(), self.doc.copy())


def init_encoder(vocab: Vocab, dim: int, seed: int = 0) -> DualEncoder:
    """Embeddings uniform in [-1/sqrt(d), 1/sqrt(d)], identity projection;
    query and document sides start as tied copies.
    """
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    emb = rng.uniform(-bound, bound, size=(len(vocab), dim))
    side = EncoderParams(emb, np.eye(dim))
    return DualEncoder(vocab, side.copy(), side.copy())


def encode(params: EncoderParams, vocab: Vocab, text: Sequence[str]) -> np.ndarray:
    """Projection applied to the mean of the token embeddings."""
    if len(text) == 0:
        raise ValueError("empty input")
    pooled = params.embedding[vocab.rows(text)].mean(axis=0)
    return params.projection @ pooled


def encode_query(enc: DualEncoder, text: Sequence[str]) -> np.ndarray:
    return encode(enc.query, enc.vocab, text)


def encode_doc(enc: DualEncoder, text: Sequence[str]) -> np.ndarray:
    return encode(enc.doc, enc.vocab, text)


def score(q_vec: np.ndarray, d_vec: np.ndarray) -> float:
    if q_vec.shape != d_vec.shape:
        raise ValueError(f"dimension mismatch: {q_vec.shape} vs {d_vec.shape}")
    return float(np.dot(q_vec, d_vec))


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x)
    e = np.exp(z)
    return e / e.sum()


def retrieval_distribution(scores: Sequence[float], temperature: float) -> np.ndarray:
    """Temperature softmax over retrieval scores, max-stabilized."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < 1:
        raise ValueError("scores must be a nonempty vector")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return softmax(s / temperature)


@dataclass
class Gradients:
    """Gradient arrays mirroring DualEncoder parameters."""

    query_embedding: np.ndarray
    query_projection: np.ndarray
    doc_embedding: np.ndarray
    doc_projection: np.ndarray

    @classmethod
    def zeros_like(cls, enc: DualEncoder) -> "Gradients":
        return cls(
            np.zeros_like(enc.query.embedding),
            np.zeros_like(enc.query.projection),
            np.zeros_like(enc.doc.embedding),
            np.zeros_like(enc.doc.projection),
        )

    def add_scaled(self, other: "Gradients", scale: float = 1.0):
        self.query_embedding += scale * other.query_embedding
        self.query_projection += scale * other.query_projection
        self.doc_embedding += scale * other.doc_embedding
        self.doc_projection += scale * other.doc_projection


def _backprop_side(params: EncoderParams, vocab: Vocab, text: Sequence[str],
                   grad_vec: np.ndarray, grad_emb: np.ndarray,
                   grad_proj: np.ndarray):
    """Accumulate d(loss)/d(params) given d(loss)/d(encoded vector)."""
    rows = vocab.rows(text)
    pooled = params.embedding[rows].mean(axis=0)
    grad_proj += np.outer(grad_vec, pooled)
    grad_pooled = params.projection.T @ grad_vec
    np.add.at(grad_emb, rows, grad_pooled / len(rows))


def score_gradient(retr_probs: np.ndarray, target_probs: np.ndarray,
                   temperature: float) -> np.ndarray:
    """d KL(target || p_retr) / d scores = (p_retr - target) / temperature."""
    return (retr_probs - target_probs) / temperature


def retriever_gradient(enc: DualEncoder, query: Sequence[str],
                       docs: Sequence[Sequence[str]],
                       target_probs: np.ndarray, temperature: float,
                       mode: TrainMode) -> Gradients:
    """Gradient of KL(target || p_retr) with respect to encoder parameters.

    The target is a constant (StopGradient). Scores are recomputed with the
    current parameters; in query_side mode document embeddings are treated
    as constants and their gradient entries stay identically zero.
    """
    mode = TrainMode(mode)
    if mode == TrainMode.FIXED:
        raise ValueError("retriever frozen")
    target = np.asarray(target_probs, dtype=np.float64)
    if abs(target.sum() - 1.0) > 1e-6 or np.any(target < -1e-12):
        raise ValueError("target_probs must be a distribution")

    q_vec = encode_query(enc, query)
    d_vecs = np.stack([encode_doc(enc, d) for d in docs])
    probs = retrieval_distribution(d_vecs @ q_vec, temperature)
    g_scores = score_gradient(probs, target, temperature)

    grads = Gradients.zeros_like(enc)
    grad_q_vec = g_scores @ d_vecs
    _backprop_side(enc.query, enc.vocab, query, grad_q_vec,
                   grads.query_embedding, grads.query_projection)
    if mode == TrainMode.FULL:
        for g_k, doc in zip(g_scores, docs):
            _backprop_side(enc.doc, enc.vocab, doc, g_k * q_vec,
                           grads.doc_embedding, grads.doc_projection)
    return grads


# ---------------------------------------------------------------------------
# Checkpoint format: magic "RLAB", version, d, vocab size, then row-major
# float32 tables (query emb, query proj, doc emb, doc proj), then the
# newline-joined vocab as UTF-8.

_MAGIC = b"RLAB"
_VERSION = 1


def save_checkpoint(enc: DualEncoder, path):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, enc.dim, len(enc.vocab)))
        for table in (enc.query.embedding, enc.query.projection,
                      enc.doc.embedding, enc.doc.projection):
            fh.write(np.ascontiguousarray(table, dtype="<f4").tobytes())
        fh.write("\n".join(enc.vocab.tokens).encode("utf-8"))


def load_checkpoint(path) -> DualEncoder:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("bad checkpoint magic")
        version, dim, vsize = struct.unpack("<III", fh.read(12))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        tables = []
        for shape in ((vsize, dim), (dim, dim), (vsize, dim), (dim, dim)):
            n = shape[0] * shape[1]
            buf = fh.read(4 * n)
            tables.append(np.frombuffer(buf, dtype="<f4").astype(np.float64)
                          .reshape(shape))
        tokens = fh.read().decode("utf-8").split("\n")
    vocab = Vocab.__new__(Vocab)
    vocab.tokens = tokens
    vocab.index = {t: i for i, t in enumerate(tokens)}
    return DualEncoder(vocab,
                       EncoderParams(tables[0], tables[1]),
                       EncoderParams(tables[2], tables[3]))
