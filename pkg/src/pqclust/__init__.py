"""Clustering of large vector collections through product-quantized codes.

Vectors are compressed once into short PQ codes; k-means then runs
entirely in the compressed domain with table lookups for distances and
histogram voting for center updates. Baseline clusterers (exact k-means,
binary k-means) and evaluation metrics operate on the original vectors
for comparison.
"""

from .baselines import (
    Binarizer,
    bkmeans_fit,
    binarize,
    cluster_means,
    hamming_to_centers,
    kmeans_fit,
    majority_center,
    original_space_error,
    rand_index,
    train_binarizer,
    unpack_bits,
)
from .clustering import (
    ClusteringResult,
    FrequencyHistogram,
    IterationStats,
    MemoryEstimate,
    assign,
    build_histogram,
    estimate_memory,
    fit,
    init_centers,
    pq_cost,
    pq_cost_sq,
    register_assignment_strategy,
    registered_assignment_strategies,
    select_assignment_strategy,
    unregister_assignment_strategy,
    update_center_naive,
    update_center_sparse,
)
from .pq import (
    MAX_CODEWORDS,
    DistanceTables,
    PQCodebook,
    build_distance_tables,
    decode,
    encode,
    paired_distance_sq,
    symmetric_distance_sq,
    train_codebook,
)

__version__ = "0.1.0"

__all__ = [
    "Binarizer",
    "ClusteringResult",
    "DistanceTables",
    "FrequencyHistogram",
    "IterationStats",
    "MAX_CODEWORDS",
    "MemoryEstimate",
    "PQCodebook",
    "assign",
    "binarize",
    "bkmeans_fit",
    "build_distance_tables",
    "build_histogram",
    "cluster_means",
    "decode",
    "encode",
    "estimate_memory",
    "fit",
    "hamming_to_centers",
    "init_centers",
    "kmeans_fit",
    "majority_center",
    "original_space_error",
    "paired_distance_sq",
    "pq_cost",
    "pq_cost_sq",
    "rand_index",
    "register_assignment_strategy",
    "registered_assignment_strategies",
    "select_assignment_strategy",
    "symmetric_distance_sq",
    "train_binarizer",
    "train_codebook",
    "unpack_bits",
    "unregister_assignment_strategy",
    "update_center_naive",
    "update_center_sparse",
]
