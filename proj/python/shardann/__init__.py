"""Partitioned HNSW approximate nearest neighbor search."""

from ._shardann import (
    Index,
    ShardannError,
    Segmenter,
    exact,
    failure_bound_estimate,
    learn_segmenter,
    per_shard_topk,
    probit,
    recall,
    shard_of,
)

__all__ = [
    "Index",
    "ShardannError",
    "Segmenter",
    "exact",
    "failure_bound_estimate",
    "learn_segmenter",
    "per_shard_topk",
    "probit",
    "recall",
    "shard_of",
]
