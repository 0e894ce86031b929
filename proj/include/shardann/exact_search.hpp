#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "shardann/core.hpp"

namespace shardann {

/// True k nearest neighbors by exhaustive scan, ranked by (distance, docId).
NeighborList exact_topk(const DatasetView& data, std::span<const float> query, std::size_t k,
                        DistanceKind kind);

/// Brute force over `partitions` contiguous chunks of the data, scanned in
/// parallel, with per-query partial lists merged afterwards. Identical to
/// exact_topk for every query.
std::vector<NeighborList> partitioned_exact(const DatasetView& data, const DatasetView& queries,
                                            std::size_t k, DistanceKind kind,
                                            std::size_t partitions, std::size_t workers);

}  // namespace shardann
