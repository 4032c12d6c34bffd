"""Reference clusterers and evaluation metrics.

Two baselines bracket the code-domain clusterer: plain Lloyd k-means on
the original vectors (the accuracy ceiling) and k-means on short binary
codes with Hamming assignment and per-bit majority-vote updates (the
memory-comparable competitor). Both share the stop rule and the
empty-cluster repair of the code-domain fit. Evaluation works on the
original vectors: mean distance of every point to the mean of its
assigned cluster, plus the Rand index against a reference labeling.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .clustering import ClusteringResult, IterationStats, _chunk_bounds

_POPCOUNT = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


def cluster_means(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Per-cluster float64 means; rows of empty clusters are zero."""
    points = np.asarray(points, dtype=np.float64)
    counts = np.bincount(labels.astype(np.intp), minlength=k).astype(np.float64)
    sums = np.stack(
        [
            np.bincount(labels.astype(np.intp), weights=points[:, d], minlength=k)
            for d in range(points.shape[1])
        ],
        axis=1,
    )
    return np.divide(sums, counts[:, None], out=np.zeros_like(sums), where=counts[:, None] > 0)


def _assigned_sq_distances(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.sum((points - centers[labels]) ** 2, axis=1)


def kmeans_fit(
    vectors: np.ndarray,
    k: int,
    max_iterations: int = 20,
    seed: int = 0,
    *,
    threads: int = 1,
    initial_centers: np.ndarray | None = None,
) -> ClusteringResult:
    """Standard Lloyd k-means on raw vectors.

    Assignment picks the nearest center by squared Euclidean distance
    (lowest index on ties), the update step recomputes cluster means in
    double precision. Stops when the objective (mean distance to the
    assigned center) repeats exactly, or at the iteration cap. Empty
    clusters are re-seeded on the point farthest from its assigned
    center. Deterministic for fixed inputs and seed, independent of the
    thread count.

    Args:
        vectors: Data of shape (N, D), stored as float32.
        k: Number of clusters, 1 <= k <= N.
        max_iterations: Iteration cap.
        seed: Seed for center initialization.
        threads: Worker threads for the assignment step.
        initial_centers: Optional (K, D) override of the sampled
            initialization.

    Returns:
        ClusteringResult with float64 centers of shape (K, D).
    """
    data = np.asarray(vectors, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError(f"vectors must be 2-d, got shape {data.shape}")
    n = len(data)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be positive, got {max_iterations}")
    points = data.astype(np.float64)
    if initial_centers is None:
        rng = np.random.default_rng(seed)
        centers = points[rng.choice(n, size=k, replace=False)].copy()
    else:
        centers = np.asarray(initial_centers, dtype=np.float64).copy()
        if centers.shape != (k, points.shape[1]):
            raise ValueError(
                f"initial_centers must have shape ({k}, {points.shape[1]}), "
                f"got {centers.shape}"
            )

    def assign_chunked(cents: np.ndarray) -> np.ndarray:
        labels = np.empty(n, dtype=np.uint32)

        def work(bounds: tuple[int, int]) -> None:
            start, stop = bounds
            labels[start:stop] = np.argmin(
                cdist(points[start:stop], cents, "sqeuclidean"), axis=1
            )

        bounds = _chunk_bounds(n, k)
        if threads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, bounds))
        else:
            for b in bounds:
                work(b)
        return labels

    trace: list[IterationStats] = []
    labels = np.zeros(n, dtype=np.uint32)
    previous = None
    converged = False
    for iteration in range(1, max_iterations + 1):
        start = time.perf_counter()
        labels = assign_chunked(centers)
        assign_seconds = time.perf_counter() - start

        sq = _assigned_sq_distances(points, centers, labels)
        objective = float(np.mean(np.sqrt(sq)))
        objective_sq = float(np.mean(sq))
        if previous is not None and objective == previous:
            trace.append(
                IterationStats(iteration, objective, objective_sq, assign_seconds, 0.0)
            )
            converged = True
            break

        start = time.perf_counter()
        counts = np.bincount(labels.astype(np.intp), minlength=k)
        new_centers = cluster_means(points, labels, k)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            own = sq.copy()
            for ki in empty:
                far = int(np.argmax(own))
                new_centers[ki] = points[far]
                own[far] = -np.inf
        update_seconds = time.perf_counter() - start

        trace.append(
            IterationStats(
                iteration,
                objective,
                objective_sq,
                assign_seconds,
                update_seconds,
                repaired_clusters=len(empty),
            )
        )
        centers = new_centers
        previous = objective
    return ClusteringResult(centers, labels, trace, len(trace), converged)


@dataclass(frozen=True)
class Binarizer:
    """Maps real vectors to B-bit codes by signs of a rotation.

    Attributes:
        rotation: float64 matrix of shape (D, B) with orthonormal
            columns. Bit b of a vector x is 1 iff (x @ rotation)[b] >= 0.
    """

    rotation: np.ndarray

    def __post_init__(self) -> None:
        rot = np.ascontiguousarray(self.rotation, dtype=np.float64)
        if rot.ndim != 2:
            raise ValueError(f"rotation must be 2-d, got shape {rot.shape}")
        gram = rot.T @ rot
        if not np.allclose(gram, np.eye(rot.shape[1]), atol=1e-6):
            raise ValueError("rotation columns must be orthonormal within 1e-6")
        rot.flags.writeable = False
        object.__setattr__(self, "rotation", rot)

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    @property
    def bits(self) -> int:
        return self.rotation.shape[1]


def train_binarizer(dim: int, bits: int, seed: int = 0) -> Binarizer:
    """Draw a random orthonormal rotation for sign binarization.

    Args:
        dim: Input dimensionality D.
        bits: Code length B, a multiple of 8 with 8 <= B <= D.
        seed: Seed for the Gaussian draw.

    Returns:
        A Binarizer with a (D, B) rotation.
    """
    if bits % 8 != 0 or bits < 8:
        raise ValueError(f"bits must be a positive multiple of 8, got {bits}")
    if bits > dim:
        raise ValueError(f"bits={bits} exceeds vector dimension {dim}")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, bits)))
    q = q * np.where(np.diag(r) >= 0, 1.0, -1.0)
    return Binarizer(q)


def binarize(binarizer: Binarizer, vectors: np.ndarray) -> np.ndarray:
    """Encode vectors into packed binary codes.

    Args:
        binarizer: Trained binarizer.
        vectors: One vector (D,) or a batch (N, D).

    Returns:
        Packed uint8 codes of shape (B/8,) or (N, B/8). Bit b lives in
        byte b // 8 at MSB-first position b % 8.
    """
    arr = np.asarray(vectors, dtype=np.float32)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != binarizer.dim:
        raise ValueError(
            f"vectors have dimension {arr.shape[1]}, binarizer expects {binarizer.dim}"
        )
    projection = arr.astype(np.float64) @ binarizer.rotation
    packed = np.packbits((projection >= 0).astype(np.uint8), axis=1)
    return packed[0] if single else packed


def unpack_bits(codes: np.ndarray, bits: int) -> np.ndarray:
    """Expand packed codes (N, B/8) into a 0/1 matrix (N, B)."""
    return np.unpackbits(np.atleast_2d(codes), axis=1, count=bits)


def majority_center(member_bits: np.ndarray) -> np.ndarray:
    """Per-bit majority vote over one cluster's members.

    Bit b of the result is 1 iff strictly more than half of the members
    have bit b set; exact ties give 0. This choice minimizes the summed
    Hamming distance to the members.

    Args:
        member_bits: 0/1 matrix of shape (N_k, B), N_k >= 1.

    Returns:
        uint8 0/1 vector of shape (B,).
    """
    bits = np.asarray(member_bits)
    if bits.ndim != 2 or len(bits) == 0:
        raise ValueError(
            f"member_bits must be a non-empty 2-d 0/1 array, got shape {bits.shape}"
        )
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("member_bits entries must be 0 or 1")
    ones = bits.sum(axis=0, dtype=np.int64)
    return (2 * ones > len(bits)).astype(np.uint8)


def hamming_to_centers(codes: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Hamming distances between packed codes (N, W) and centers (K, W)."""
    xor = codes[:, None, :] ^ centers[None, :, :]
    return _POPCOUNT[xor].sum(axis=2, dtype=np.int64)


def bkmeans_fit(
    codes: np.ndarray,
    k: int,
    max_iterations: int = 20,
    seed: int = 0,
    *,
    threads: int = 1,
    initial_centers: np.ndarray | None = None,
) -> ClusteringResult:
    """K-means on packed binary codes.

    Assignment minimizes the Hamming distance (lowest index on ties),
    the update step takes per-bit majority votes. Stop rule and
    empty-cluster repair match kmeans_fit. The trace objective is the
    mean Hamming distance to the assigned center.

    Args:
        codes: Packed uint8 codes of shape (N, B/8).
        k: Number of clusters, 1 <= k <= N.
        max_iterations: Iteration cap.
        seed: Seed for center initialization.
        threads: Worker threads for the assignment step.
        initial_centers: Optional (K, B/8) packed override of the
            sampled initialization.

    Returns:
        ClusteringResult with packed uint8 centers of shape (K, B/8).
    """
    packed = np.asarray(codes, dtype=np.uint8)
    if packed.ndim != 2 or packed.shape[1] == 0:
        raise ValueError(f"codes must have shape (N, B/8), got {packed.shape}")
    n, width = packed.shape
    bits = 8 * width
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be positive, got {max_iterations}")
    if initial_centers is None:
        rng = np.random.default_rng(seed)
        centers = packed[rng.choice(n, size=k, replace=False)].copy()
    else:
        centers = np.asarray(initial_centers, dtype=np.uint8).copy()
        if centers.shape != (k, width):
            raise ValueError(
                f"initial_centers must have shape ({k}, {width}), got {centers.shape}"
            )

    def assign_chunked(cents: np.ndarray) -> np.ndarray:
        labels = np.empty(n, dtype=np.uint32)

        def work(bounds: tuple[int, int]) -> None:
            start, stop = bounds
            labels[start:stop] = np.argmin(
                hamming_to_centers(packed[start:stop], cents), axis=1
            )

        bounds = _chunk_bounds(n, k)
        if threads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(work, bounds))
        else:
            for b in bounds:
                work(b)
        return labels

    trace: list[IterationStats] = []
    labels = np.zeros(n, dtype=np.uint32)
    previous = None
    converged = False
    for iteration in range(1, max_iterations + 1):
        start = time.perf_counter()
        labels = assign_chunked(centers)
        assign_seconds = time.perf_counter() - start

        dist = _POPCOUNT[packed ^ centers[labels]].sum(axis=1, dtype=np.int64)
        objective = float(np.mean(dist))
        objective_sq = float(np.mean(dist.astype(np.float64) ** 2))
        if previous is not None and objective == previous:
            trace.append(
                IterationStats(iteration, objective, objective_sq, assign_seconds, 0.0)
            )
            converged = True
            break

        start = time.perf_counter()
        counts = np.bincount(labels.astype(np.intp), minlength=k)
        new_centers = np.zeros((k, width), dtype=np.uint8)
        order = np.argsort(labels, kind="stable")
        stops = np.cumsum(counts)
        starts = stops - counts
        for ki in np.flatnonzero(counts > 0):
            members = unpack_bits(packed[order[starts[ki] : stops[ki]]], bits)
            new_centers[ki] = np.packbits(majority_center(members))
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            own = dist.astype(np.float64)
            for ki in empty:
                far = int(np.argmax(own))
                new_centers[ki] = packed[far]
                own[far] = -np.inf
        update_seconds = time.perf_counter() - start

        trace.append(
            IterationStats(
                iteration,
                objective,
                objective_sq,
                assign_seconds,
                update_seconds,
                repaired_clusters=len(empty),
            )
        )
        centers = new_centers
        previous = objective
    return ClusteringResult(centers, labels, trace, len(trace), converged)


def original_space_error(vectors: np.ndarray, labels: np.ndarray) -> float:
    """Mean distance of each vector to the mean of its assigned cluster.

    Cluster means are computed from the original vectors grouped by the
    given labels, in double precision. Clusters that received no points
    contribute nothing.

    Args:
        vectors: Original data of shape (N, D).
        labels: Cluster index per point, shape (N,).

    Returns:
        The mean Euclidean distance as a float.
    """
    data = np.asarray(vectors, dtype=np.float32)
    labels = np.asarray(labels)
    if data.ndim != 2:
        raise ValueError(f"vectors must be 2-d, got shape {data.shape}")
    if labels.shape != (len(data),):
        raise ValueError(
            f"labels must have shape ({len(data)},), got {labels.shape}"
        )
    if len(data) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    points = data.astype(np.float64)
    k = int(labels.max()) + 1
    means = cluster_means(points, labels, k)
    sq = _assigned_sq_distances(points, means, labels)
    return float(np.mean(np.sqrt(sq)))


def rand_index(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Fraction of point pairs on which two labelings agree.

    A pair agrees when both labelings put it in one cluster, or both
    split it. Invariant under label permutation and symmetric in the
    arguments.

    Args:
        labels_a: First labeling, shape (N,).
        labels_b: Second labeling, shape (N,).

    Returns:
        Agreement fraction in [0, 1]. Defined as 1.0 when N < 2.
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"labelings differ in length: {a.shape} vs {b.shape}")
    n = len(a)
    if n < 2:
        return 1.0
    _, inv_a = np.unique(a, return_inverse=True)
    _, inv_b = np.unique(b, return_inverse=True)
    joint = inv_a.astype(np.int64) * (int(inv_b.max()) + 1) + inv_b

    def same_pairs(counts: np.ndarray) -> int:
        c = counts.astype(np.int64)
        return int(np.sum(c * (c - 1))) // 2

    together_both = same_pairs(np.bincount(joint))
    together_a = same_pairs(np.bincount(inv_a))
    together_b = same_pairs(np.bincount(inv_b))
    disagreements = (together_a - together_both) + (together_b - together_both)
    return 1.0 - disagreements / (n * (n - 1) // 2)
