#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shardann/core.hpp"
#include "shardann/partitioned_index.hpp"

namespace shardann {

/// Inverse standard normal CDF for p in (0, 1): rational approximation
/// followed by one Newton step against erfc.
double probit(double p);

/// How the confidence p maps to the normal quantile f(p).
enum class QuantileMode : std::uint8_t {
  kTwoSided,  ///< f(p) = probit((1 + p) / 2), 1.96 at p = 0.95
  kLiteral,   ///< f(p) = probit(1 - p / 2), 0.063 at p = 0.95
};

/// Results requested from each shard so that, with confidence p, a shard
/// holding a 1/S share of the true top-k still returns all of them:
///   cI = 1/S + f(p) sqrt((1/S)(1 - 1/S) / topK),  min(topK, ceil(cI topK)), at least 1.
std::size_t per_shard_topk(std::size_t top_k, std::uint32_t num_shards, double confidence,
                           QuantileMode mode = QuantileMode::kTwoSided);

/// Merges ranked lists into one: sorted by (distance, docId), duplicate ids
/// keep their smaller distance, truncated to k.
NeighborList merge(std::span<const NeighborList> lists, std::size_t k);

enum class SegmentSearch : std::uint8_t {
  kHnsw,
  kExact,  ///< brute force inside each segment; for oracle comparisons
};

struct QueryConfig {
  std::size_t top_k = 100;
  std::size_t ef_search = 100;
  double confidence = 0.95;
  bool use_per_shard_topk = true;
  QuantileMode quantile = QuantileMode::kTwoSided;
  SegmentSearch segment_search = SegmentSearch::kHnsw;
  /// Visit every segment instead of the segmenter's choice.
  bool route_all = false;

  void validate() const;
};

/// Per-shard count actually requested for `index` under `cfg`.
std::size_t effective_shard_k(const PartitionedIndex& index, const QueryConfig& cfg);

/// Two-level scatter-gather: every shard searches its routed segments with
/// k' results each, segment lists merge into a shard list of k', shard lists
/// merge into the final top-k.
NeighborList query(const PartitionedIndex& index, std::span<const float> q,
                   const QueryConfig& cfg);

struct BatchReport {
  std::size_t count = 0;
  double wall_seconds = 0.0;
  double qps = 0.0;
  double latency_ms_mean = 0.0;
  double latency_ms_p50 = 0.0;
  double latency_ms_p99 = 0.0;
  std::size_t failures = 0;

  std::string to_json() const;
};

struct BatchResult {
  std::vector<NeighborList> results;
  /// Empty string for rows that succeeded.
  std::vector<std::string> errors;
  BatchReport report;
};

/// Runs query() for every row on up to `workers` threads. Row order is
/// preserved; a failing row records its error and leaves an empty result.
BatchResult batch_query(const PartitionedIndex& index, const DatasetView& queries,
                        const QueryConfig& cfg, std::size_t workers);

}  // namespace shardann
