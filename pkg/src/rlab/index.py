"""Versioned embedding index with exact sharded top-k search.

Search is exact: sharding only partitions the scan, and shard results are
merged so the output is identical to a single brute-force pass. Ties are
broken by ascending passage id everywhere a top-k cut is taken. Rebuilds
produce a new immutable index with an incremented version.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Passage
from .retriever import DualEncoder, encode_doc

_PRECISIONS = {"float32": 0, "float16": 1}
_PRECISION_NAMES = {v: k for k, v in _PRECISIONS.items()}


def _store(vectors: np.ndarray, precision: str) -> np.ndarray:
    """Emulate storage precision: float16 rounds on write, arithmetic
    stays in full precision."""
    if precision == "float16":
        return vectors.astype(np.float16).astype(np.float64)
    return vectors.astype(np.float32).astype(np.float64)


@dataclass
class EmbeddingIndex:
    version: int
    dim: int
    ids: list[str]  # ascending
    vectors: np.ndarray  # (N, dim)
    precision: str = "float32"
    shards: int = 1
    dump_date: str | None = None

    @property
    def size(self) -> int:
        return len(self.ids)

    def memory_bytes(self) -> int:
        per_scalar = 2 if self.precision == "float16" else 4
        return self.size * self.dim * per_scalar


def build(passages: Sequence[Passage], encoder: DualEncoder,
          shards: int = 1, precision: str = "float32",
          previous_version: int = 0) -> EmbeddingIndex:
    """Embed every passage with the document encoder. Entries are ordered
    by ascending passage id; version = previous + 1."""
    if not passages:
        raise ValueError("cannot build an index from zero passages")
    if shards < 1:
        raise ValueError("shards must be >= 1")
    ordered = sorted(passages, key=lambda p: p.id)
    ids = [p.id for p in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate passage ids")
    vectors = np.stack([encode_doc(encoder, p.text) for p in ordered])
    dates = {p.dump_date for p in ordered if p.dump_date}
    return EmbeddingIndex(
        version=previous_version + 1,
        dim=encoder.dim,
        ids=ids,
        vectors=_store(vectors, precision),
        precision=precision,
        shards=shards,
        dump_date=dates.pop() if len(dates) == 1 else None,
    )


def shard_bounds(n: int, shards: int) -> list[tuple[int, int]]:
    """Contiguous balanced partition: sizes differ by at most one."""
    base, extra = divmod(n, shards)
    bounds = []
    pos = 0
    for i in range(shards):
        size = base + (1 if i < extra else 0)
        bounds.append((pos, pos + size))
        pos += size
    return bounds


def _top_k(ids: Sequence[str], scores: np.ndarray, k: int) -> list[tuple[str, float]]:
    """k best by descending score, ties by ascending id."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order[:k]]


def search(index: EmbeddingIndex, q_vec: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact top-k by dot product, fanned out over shards and merged.

    Returns min(k, N) results; identical to a full brute-force scan for
    any shard count.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    q_vec = np.asarray(q_vec, dtype=np.float64)
    if q_vec.shape != (index.dim,):
        raise ValueError(f"query dimension {q_vec.shape} != index dim {index.dim}")
    # Scores are computed in one pass so a shard boundary can never change
    # a value; shards partition the candidate selection and merge.
    scores = index.vectors @ q_vec
    candidates = []
    for lo, hi in shard_bounds(index.size, index.shards):
        if lo == hi:
            continue
        candidates.extend(_top_k(index.ids[lo:hi], scores[lo:hi], k))
    candidates.sort(key=lambda t: (-t[1], t[0]))
    return candidates[:k]


def search_batch(index: EmbeddingIndex, q_vecs: np.ndarray, k: int) -> list[list[tuple[str, float]]]:
    return [search(index, q, k) for q in q_vecs]


# ---------------------------------------------------------------------------
# Index file: magic "RIDX", version, dim, precision, N; id table; vector
# block. Little-endian throughout, bit-exact round trip.

_MAGIC = b"RIDX"
_FORMAT_VERSION = 1


def save_index(index: EmbeddingIndex, path):
    id_blob = "\n".join(index.ids).encode("utf-8")
    dtype = "<f2" if index.precision == "float16" else "<f4"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIBIQ", _FORMAT_VERSION, index.version,
                             index.dim, _PRECISIONS[index.precision],
                             index.size, len(id_blob)))
        fh.write(id_blob)
        fh.write(np.ascontiguousarray(index.vectors, dtype=dtype).tobytes())


def load_index(path) -> EmbeddingIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("bad index magic")
        fmt, version, dim, prec, n, id_len = struct.unpack("<IIIBIQ", fh.read(25))
        if fmt != _FORMAT_VERSION:
            raise ValueError(f"unsupported index format {fmt}")
        precision = _PRECISION_NAMES[prec]
        ids = fh.read(id_len).decode("utf-8").split("\n") if id_len else []
        dtype = "<f2" if precision == "float16" else "<f4"
        vectors = np.frombuffer(fh.read(), dtype=dtype).astype(np.float64)
    return EmbeddingIndex(version=version, dim=dim, ids=ids,
                          vectors=vectors.reshape(n, dim),
                          precision=precision)
