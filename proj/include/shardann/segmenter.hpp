#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shardann/core.hpp"

namespace shardann {

enum class SegmenterKind : std::uint8_t {
  kRandom,            ///< RS: key-hashed segment, queries go to every segment
  kRandomHyperplane,  ///< RH: random unit normals, median splits
  kApd,               ///< APD: second right singular vector of each node's sample
};

std::string_view to_string(SegmenterKind kind);
SegmenterKind parse_segmenter_kind(std::string_view name);

/// One split of the tree. Points with projection < split go left. Queries in
/// the closed band [lo, hi] visit both children.
struct HyperplaneNode {
  std::vector<double> normal;
  double split = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  friend bool operator==(const HyperplaneNode&, const HyperplaneNode&) = default;
};

/// Split points from projections with the rank rules
///   split = P[n/2], lo = P[(0.5-a)n], hi = P[min(n-1, (0.5+a)n)]
/// on the ascending order P (indices floored).
struct SplitPoints {
  double split;
  double lo;
  double hi;
};
SplitPoints fractile_split(std::vector<double> projections, double alpha);

/// Complete binary tree of hyperplanes stored in level order: node i has
/// children 2i+1 and 2i+2, and leaf j (the segment id) sits at 2^L - 1 + j.
class SegmenterTree {
 public:
  SegmenterTree() = default;

  static SegmenterTree random(std::uint32_t num_segments);
  static SegmenterTree from_nodes(SegmenterKind kind, std::size_t dim, std::uint32_t levels,
                                  double alpha, std::uint64_t seed,
                                  std::vector<HyperplaneNode> nodes);

  SegmenterKind kind() const { return kind_; }
  std::uint32_t levels() const { return levels_; }
  double alpha() const { return alpha_; }
  std::uint64_t seed() const { return seed_; }
  std::uint32_t num_segments() const { return num_segments_; }
  /// 0 for the random kind, which accepts any dimension.
  std::size_t dim() const { return dim_; }
  const std::vector<HyperplaneNode>& nodes() const { return nodes_; }

  /// Single segment for a document (hyperplane kinds).
  std::uint32_t route_document(std::span<const float> x) const;
  /// Single segment for a document; the random kind hashes `key`.
  std::uint32_t route_document(std::span<const float> x, std::string_view key) const;
  /// Every segment whose band the document falls into (physical spill).
  std::vector<std::uint32_t> route_document_spilled(std::span<const float> x,
                                                    std::string_view key = {}) const;
  /// Segments a query visits under virtual spill, ascending.
  std::vector<std::uint32_t> route_query(std::span<const float> q) const;

  std::string to_json() const;
  static SegmenterTree from_json(std::string_view text);
  void save(const std::string& path) const;
  static SegmenterTree load(const std::string& path);

  friend bool operator==(const SegmenterTree&, const SegmenterTree&) = default;

 private:
  void check_dim(std::size_t n) const;
  std::vector<std::uint32_t> route_band(std::span<const float> x) const;

  SegmenterKind kind_ = SegmenterKind::kRandom;
  std::uint32_t levels_ = 0;
  double alpha_ = 0.0;
  std::uint64_t seed_ = 0;
  std::uint32_t num_segments_ = 1;
  std::size_t dim_ = 0;
  std::vector<HyperplaneNode> nodes_;
};

/// Random-hyperplane tree of depth `levels` learned on `sample`.
SegmenterTree learn_rh(const Dataset& sample, std::uint32_t levels, double alpha,
                       std::uint64_t seed);

/// Approximate-principal-direction tree: each node splits on the second right
/// singular vector of its own share of the sample.
SegmenterTree learn_apd(const Dataset& sample, std::uint32_t levels, double alpha);

struct PowerIterationOptions {
  double angle_tolerance = 1e-6;
  int max_iterations = 500;
  std::uint64_t start_seed = 0x5eed;
};

/// Right singular vector of the sample matrix for its second-largest singular
/// value: power iteration on the Gram matrix with the top vector deflated. The
/// sign makes the first non-negligible component positive. No centering.
std::vector<double> second_singular_vector(const DatasetView& sample,
                                           const PowerIterationOptions& options = {});

}  // namespace shardann
