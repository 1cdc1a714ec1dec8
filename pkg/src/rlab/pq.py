"""Product quantization: per-subspace k-means codebooks, asymmetric
search, and memory accounting.

Each dim-d vector is split into m subvectors of d/m dimensions; each
subvector is replaced by the index of its nearest centroid out of k_c
learned per subspace. Search decodes nothing: per-subspace dot-product
lookup tables against the query give the approximate scores.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .index import EmbeddingIndex, _top_k


@dataclass
class PQCodec:
    m: int
    k_c: int
    codebooks: np.ndarray  # (m, k_c, dim // m)

    @property
    def sub_dim(self) -> int:
        return self.codebooks.shape[2]

    @property
    def dim(self) -> int:
        return self.m * self.sub_dim

    def codebook_bytes(self, bytes_per_scalar: int = 4) -> int:
        return self.codebooks.size * bytes_per_scalar


@dataclass
class PQIndex:
    codec: PQCodec
    ids: list[str]
    codes: np.ndarray  # (N, m) centroid indices
    version: int
    dim: int

    @property
    def size(self) -> int:
        return len(self.ids)

    def code_bytes(self) -> int:
        bits = math.ceil(math.log2(self.codec.k_c)) if self.codec.k_c > 1 else 1
        return math.ceil(self.size * self.codec.m * bits / 8)

    def memory_bytes(self) -> int:
        return self.code_bytes() + self.codec.codebook_bytes()


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Farthest-point style seeding: first centroid random, each next one
    is the point with maximal squared distance to its nearest centroid."""
    centroids = [data[rng.integers(len(data))]]
    d2 = np.sum((data - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        centroids.append(data[int(np.argmax(d2))])
        d2 = np.minimum(d2, np.sum((data - centroids[-1]) ** 2, axis=1))
    return np.stack(centroids)


def _kmeans(data: np.ndarray, k: int, iterations: int,
            rng: np.random.Generator) -> tuple[np.ndarray, float]:
    centroids = _kmeans_pp_init(data, k, rng)
    objective = np.inf
    for _ in range(iterations):
        d2 = np.sum((data[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        assign = np.argmin(d2, axis=1)
        objective = float(d2[np.arange(len(data)), assign].sum())
        for c in range(k):
            members = data[assign == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return centroids, objective


def train_pq(index: EmbeddingIndex, m: int, k_c: int,
             iterations: int = 20, seed: int = 0) -> PQCodec:
    """Learn per-subspace k-means codebooks on the index vectors.

    The sum of squared quantization errors is non-increasing across
    iterations (standard k-means monotonicity).
    """
    if index.dim % m != 0:
        raise ValueError(f"m={m} does not divide dim={index.dim}")
    if k_c > index.size:
        raise ValueError("insufficient data: k_c exceeds index size")
    rng = np.random.default_rng(seed)
    sub = index.vectors.reshape(index.size, m, index.dim // m)
    codebooks = np.stack([
        _kmeans(sub[:, j, :], k_c, iterations, rng)[0] for j in range(m)
    ])
    return PQCodec(m=m, k_c=k_c, codebooks=codebooks)


def pq_objective(index: EmbeddingIndex, codec: PQCodec) -> float:
    """Total squared quantization error of the index under the codec."""
    compressed = compress(index, codec)
    decoded = decode(compressed)
    return float(((index.vectors - decoded) ** 2).sum())


def encode_vector(codec: PQCodec, vec: np.ndarray) -> np.ndarray:
    sub = vec.reshape(codec.m, codec.sub_dim)
    codes = np.empty(codec.m, dtype=np.int64)
    for j in range(codec.m):
        d2 = np.sum((codec.codebooks[j] - sub[j]) ** 2, axis=1)
        codes[j] = int(np.argmin(d2))
    return codes


def compress(index: EmbeddingIndex, codec: PQCodec) -> PQIndex:
    if codec.dim != index.dim:
        raise ValueError("codec dimension incompatible with index")
    codes = np.stack([encode_vector(codec, v) for v in index.vectors])
    return PQIndex(codec=codec, ids=list(index.ids), codes=codes,
                   version=index.version, dim=index.dim)


def decode(pqindex: PQIndex) -> np.ndarray:
    """Reconstruct vectors as concatenations of assigned centroids."""
    codec = pqindex.codec
    parts = [codec.codebooks[j][pqindex.codes[:, j]] for j in range(codec.m)]
    return np.concatenate(parts, axis=1)


def pq_search(pqindex: PQIndex, q_vec: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Asymmetric top-k: per-subspace lookup tables of query-centroid dot
    products; a vector's approximate score is the sum over its codes."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q_vec = np.asarray(q_vec, dtype=np.float64)
    if q_vec.shape != (pqindex.dim,):
        raise ValueError("query dimension mismatch")
    codec = pqindex.codec
    q_sub = q_vec.reshape(codec.m, codec.sub_dim)
    tables = np.einsum("mkd,md->mk", codec.codebooks, q_sub)  # (m, k_c)
    scores = np.zeros(pqindex.size)
    for j in range(codec.m):
        scores += tables[j][pqindex.codes[:, j]]
    return _top_k(pqindex.ids, scores, k)


def recall_at_k(approx_results: Sequence[Sequence[tuple[str, float]]],
                exact_results: Sequence[Sequence[tuple[str, float]]],
                k: int) -> float:
    """Mean over queries of |approx top-k intersect exact top-k| / k."""
    if len(approx_results) != len(exact_results):
        raise ValueError("result lists must cover the same query set")
    total = 0.0
    for approx, exact in zip(approx_results, exact_results):
        a = {pid for pid, _ in approx[:k]}
        e = {pid for pid, _ in exact[:k]}
        total += len(a & e) / k
    return total / len(approx_results)


# ---------------------------------------------------------------------------
# Memory accounting

def uncompressed_bytes(n: int, dim: int, bytes_per_scalar: int = 2) -> int:
    return n * dim * bytes_per_scalar


def compressed_bytes(n: int, m: int, k_c: int, codebook_bytes: int = 0) -> float:
    bits = math.ceil(math.log2(k_c)) if k_c > 1 else 1
    return n * m * bits / 8 + codebook_bytes


def compression_ratio(dim: int, bytes_per_scalar: int, m: int, k_c: int) -> float:
    """Per-vector ratio: (dim * bytes) / (m * ceil(log2 k_c) / 8)."""
    bits = math.ceil(math.log2(k_c)) if k_c > 1 else 1
    return dim * bytes_per_scalar / (m * bits / 8)


def compressed_size_from_reported(uncompressed: float, dim: int,
                                  bytes_per_scalar: int, m: int, k_c: int) -> float:
    """Scale a reported uncompressed index size by the PQ ratio; codebook
    overhead is negligible at corpus scale."""
    return uncompressed / compression_ratio(dim, bytes_per_scalar, m, k_c)


# ---------------------------------------------------------------------------
# PQ index file: the exact-index header with a codec block appended.

_MAGIC = b"RPQX"
_FORMAT_VERSION = 1


def save_pq_index(pqindex: PQIndex, path):
    id_blob = "\n".join(pqindex.ids).encode("utf-8")
    codec = pqindex.codec
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIIIIQ", _FORMAT_VERSION, pqindex.version,
                             pqindex.dim, codec.m, codec.k_c, pqindex.size,
                             len(id_blob)))
        fh.write(id_blob)
        fh.write(np.ascontiguousarray(codec.codebooks, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(pqindex.codes, dtype="<u2").tobytes())


def load_pq_index(path) -> PQIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("bad PQ index magic")
        fmt, version, dim, m, k_c, n, id_len = struct.unpack("<IIIIIIQ", fh.read(32))
        if fmt != _FORMAT_VERSION:
            raise ValueError(f"unsupported PQ format {fmt}")
        ids = fh.read(id_len).decode("utf-8").split("\n") if id_len else []
        sub_dim = dim // m
        cb = np.frombuffer(fh.read(4 * m * k_c * sub_dim), dtype="<f4")
        codes = np.frombuffer(fh.read(2 * n * m), dtype="<u2")
    codec = PQCodec(m=m, k_c=k_c,
                    codebooks=cb.astype(np.float64).reshape(m, k_c, sub_dim))
    return PQIndex(codec=codec, ids=ids,
                   codes=codes.astype(np.int64).reshape(n, m),
                   version=version, dim=dim)
