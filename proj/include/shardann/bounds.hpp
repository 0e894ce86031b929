#pragma once

// Failure-probability bounds for spill trees of depth L built on n points.
// Distances here are Euclidean.

#include <cstddef>
#include <cstdint>
#include <span>

#include "shardann/core.hpp"

namespace shardann {

/// Potential of query q for its k nearest neighbors at scale m:
///   (1/m) * sum_{i>k} (mean_{j<=k} |q - x_(j)|) / |q - x_(i)|
/// with x_(i) the data sorted by distance to q. k = 1 is the 1-NN potential.
double potential(std::span<const float> q, const DatasetView& data, std::size_t k, double m);

/// Upper bound on the probability that a depth-L tree with spill alpha misses
/// the true neighbors of q:
///   k = 1:  1/(2 alpha) * sum_{i=0..L} potential(q, data, 1, (0.5+alpha)^i n)
///   k > 1:  k/alpha     * sum_{i=0..L} potential(q, data, k, (0.5+alpha)^i n)
/// The value can exceed 1.
double failure_bound(std::span<const float> q, const DatasetView& data, std::size_t k,
                     double alpha, std::uint32_t levels);

/// Data-independent approximation sum_{i=1..L} 1 / (2 (0.5+alpha)^i n).
double failure_bound_estimate(std::size_t n, double alpha, std::uint32_t levels);

}  // namespace shardann
