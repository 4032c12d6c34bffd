"""Product quantization core.

A product quantizer splits a D-dimensional vector into M contiguous
sub-vectors and quantizes each one against its own codebook of L
codewords. A vector is then represented by M small integer indices
(one byte each, so L <= 256). Squared distances between two encoded
vectors are recovered from per-subspace lookup tables of squared
inter-codeword distances, without touching the original vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

MAX_CODEWORDS = 256


@dataclass(frozen=True)
class PQCodebook:
    """Trained codewords of a product quantizer.

    Attributes:
        codewords: Array of shape (M, L, D // M), float32. Subspace m
            quantizes the slice [m * D//M, (m+1) * D//M) of a vector
            against codewords[m].
    """

    codewords: np.ndarray

    def __post_init__(self) -> None:
        cw = np.asarray(self.codewords, dtype=np.float32)
        if cw.ndim != 3:
            raise ValueError(f"codewords must have shape (M, L, D/M), got {cw.shape}")
        if not 2 <= cw.shape[1] <= MAX_CODEWORDS:
            raise ValueError(
                f"codeword count L={cw.shape[1]} outside [2, {MAX_CODEWORDS}]"
            )
        if not np.all(np.isfinite(cw)):
            raise ValueError("codewords must be finite")
        cw = np.ascontiguousarray(cw)
        cw.flags.writeable = False
        object.__setattr__(self, "codewords", cw)

    @property
    def num_subspaces(self) -> int:
        return self.codewords.shape[0]

    @property
    def num_codewords(self) -> int:
        return self.codewords.shape[1]

    @property
    def subspace_dim(self) -> int:
        return self.codewords.shape[2]

    @property
    def dim(self) -> int:
        return self.codewords.shape[0] * self.codewords.shape[2]


@dataclass(frozen=True)
class DistanceTables:
    """Per-subspace squared distances between all codeword pairs.

    Attributes:
        tables: Array of shape (M, L, L), float64. tables[m, i, j] is
            the squared Euclidean distance between codewords i and j of
            subspace m. Each slice is symmetric with a zero diagonal.
    """

    tables: np.ndarray

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.tables, dtype=np.float64)
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ValueError(f"tables must have shape (M, L, L), got {t.shape}")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("table entries must be finite and non-negative")
        if np.any(t.diagonal(axis1=1, axis2=2) != 0.0):
            raise ValueError("table diagonals must be exactly zero")
        if not np.array_equal(t, np.swapaxes(t, 1, 2)):
            raise ValueError("tables must be symmetric")
        t.flags.writeable = False
        object.__setattr__(self, "tables", t)

    @property
    def num_subspaces(self) -> int:
        return self.tables.shape[0]

    @property
    def num_codewords(self) -> int:
        return self.tables.shape[1]


def _validate_codes(codes: np.ndarray, num_subspaces: int, num_codewords: int) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != num_subspaces:
        raise ValueError(
            f"codes must have shape (N, {num_subspaces}), got {codes.shape}"
        )
    if not np.issubdtype(codes.dtype, np.integer):
        raise ValueError(f"codes must be integers, got dtype {codes.dtype}")
    if codes.size and (codes.min() < 0 or codes.max() >= num_codewords):
        raise ValueError(
            f"code indices must lie in [0, {num_codewords}), "
            f"got range [{codes.min()}, {codes.max()}]"
        )
    return codes


def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest center per point, lowest index on ties."""
    return np.argmin(cdist(points, centers, "sqeuclidean"), axis=1)


def _cluster_sums(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    # One bincount per dimension keeps the accumulation order fixed.
    return np.stack(
        [np.bincount(labels, weights=points[:, d], minlength=k) for d in range(points.shape[1])],
        axis=1,
    )


def _lloyd_subspace(
    sub: np.ndarray, num_codewords: int, iterations: int, rng: np.random.Generator
) -> np.ndarray:
    """Run Lloyd k-means on one subspace, float64 throughout.

    Initial centers are sampled from the data without replacement. A
    codeword left with no assigned vectors is re-seeded on the training
    vector farthest from its current codeword (lowest index on ties).
    """
    points = sub.astype(np.float64)
    n = len(points)
    centers = points[rng.choice(n, size=num_codewords, replace=False)].copy()
    for _ in range(iterations):
        labels = _nearest(points, centers)
        counts = np.bincount(labels, minlength=num_codewords)
        sums = _cluster_sums(points, labels, num_codewords)
        filled = counts > 0
        centers[filled] = sums[filled] / counts[filled, None]
        if not filled.all():
            own = np.sum((points - centers[labels]) ** 2, axis=1)
            for slot in np.flatnonzero(~filled):
                far = int(np.argmax(own))
                centers[slot] = points[far]
                labels[far] = slot
                own[far] = -np.inf
    return centers


def train_codebook(
    train_vectors: np.ndarray,
    num_subspaces: int,
    num_codewords: int,
    iterations: int = 20,
    seed: int = 0,
) -> PQCodebook:
    """Train per-subspace codebooks with k-means.

    Each of the M subspaces is clustered independently with Lloyd's
    algorithm for a fixed number of iterations, k = L, initial codewords
    sampled from the training sub-vectors under the given seed. The
    result is deterministic for fixed inputs and seed.

    Args:
        train_vectors: Training vectors, shape (N, D). D must be divisible
            by num_subspaces and N must be at least num_codewords.
        num_subspaces: Number of subspaces M.
        num_codewords: Codewords per subspace L, between 2 and 256.
        iterations: Lloyd iterations per subspace.
        seed: Seed for codeword initialization.

    Returns:
        A PQCodebook with float32 codewords of shape (M, L, D // M).
    """
    vectors = np.asarray(train_vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError(f"train_vectors must be 2-d, got shape {vectors.shape}")
    n, dim = vectors.shape
    if num_subspaces < 1 or dim % num_subspaces != 0:
        raise ValueError(
            f"dimension {dim} is not divisible into {num_subspaces} subspaces"
        )
    if not 2 <= num_codewords <= MAX_CODEWORDS:
        raise ValueError(f"num_codewords must be in [2, {MAX_CODEWORDS}], got {num_codewords}")
    if n < num_codewords:
        raise ValueError(
            f"need at least {num_codewords} training vectors, got {n}"
        )
    if iterations < 1:
        raise ValueError(f"iterations must be positive, got {iterations}")
    sub_dim = dim // num_subspaces
    rng = np.random.default_rng(seed)
    books = np.empty((num_subspaces, num_codewords, sub_dim), dtype=np.float32)
    for m in range(num_subspaces):
        sub = vectors[:, m * sub_dim : (m + 1) * sub_dim]
        books[m] = _lloyd_subspace(sub, num_codewords, iterations, rng).astype(np.float32)
    return PQCodebook(books)


def encode(codebook: PQCodebook, vectors: np.ndarray) -> np.ndarray:
    """Quantize vectors to PQ codes.

    Every sub-vector maps to the index of its nearest codeword by squared
    Euclidean distance, lowest index on ties.

    Args:
        codebook: Trained codebook.
        vectors: One vector of shape (D,) or a batch of shape (N, D).

    Returns:
        uint8 codes, shape (M,) for a single vector or (N, M) for a batch.
    """
    arr = np.asarray(vectors, dtype=np.float32)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != codebook.dim:
        raise ValueError(
            f"vectors have dimension {arr.shape[1]}, codebook expects {codebook.dim}"
        )
    sub_dim = codebook.subspace_dim
    points = arr.astype(np.float64)
    codes = np.empty((len(arr), codebook.num_subspaces), dtype=np.uint8)
    for m in range(codebook.num_subspaces):
        sub = points[:, m * sub_dim : (m + 1) * sub_dim]
        codes[:, m] = _nearest(sub, codebook.codewords[m].astype(np.float64))
    return codes[0] if single else codes


def decode(codebook: PQCodebook, codes: np.ndarray) -> np.ndarray:
    """Reconstruct approximate vectors by codeword lookup.

    Args:
        codebook: Trained codebook.
        codes: uint8 codes, shape (M,) or (N, M).

    Returns:
        float32 vectors of shape (D,) or (N, D) built by concatenating
        the selected codeword of every subspace.
    """
    arr = np.asarray(codes)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    arr = _validate_codes(arr, codebook.num_subspaces, codebook.num_codewords)
    parts = [codebook.codewords[m][arr[:, m]] for m in range(codebook.num_subspaces)]
    out = np.concatenate(parts, axis=1)
    return out[0] if single else out


def build_distance_tables(codebook: PQCodebook) -> DistanceTables:
    """Precompute squared inter-codeword distances for every subspace.

    Args:
        codebook: Trained codebook.

    Returns:
        DistanceTables of shape (M, L, L), float64.
    """
    m_count, l_count, _ = codebook.codewords.shape
    tables = np.empty((m_count, l_count, l_count), dtype=np.float64)
    for m in range(m_count):
        cw = codebook.codewords[m].astype(np.float64)
        tables[m] = cdist(cw, cw, "sqeuclidean")
    return DistanceTables(tables)


def paired_distance_sq(tables: DistanceTables, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared symmetric distance for row-aligned code batches.

    Args:
        tables: Precomputed distance tables.
        a: Codes of shape (N, M).
        b: Codes of shape (N, M).

    Returns:
        float64 array of shape (N,). Entry n sums tables[m][a[n, m], b[n, m]]
        over subspaces.
    """
    a = _validate_codes(a, tables.num_subspaces, tables.num_codewords)
    b = _validate_codes(b, tables.num_subspaces, tables.num_codewords)
    if a.shape != b.shape:
        raise ValueError(f"code batches differ in shape: {a.shape} vs {b.shape}")
    acc = np.zeros(len(a), dtype=np.float64)
    for m in range(tables.num_subspaces):
        acc += tables.tables[m][a[:, m], b[:, m]]
    return acc


def symmetric_distance_sq(tables: DistanceTables, a: np.ndarray, b: np.ndarray) -> float:
    """Squared symmetric distance between two PQ codes.

    The distance is the sum over subspaces of the tabulated squared
    distance between the two selected codewords. It equals the squared
    Euclidean distance between decode(a) and decode(b) up to float
    accumulation.

    Args:
        tables: Precomputed distance tables.
        a: Code of shape (M,).
        b: Code of shape (M,).

    Returns:
        Squared distance as a float.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ValueError("symmetric_distance_sq expects single codes of shape (M,)")
    return float(paired_distance_sq(tables, a[None, :], b[None, :])[0])
