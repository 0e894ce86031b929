#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "shardann/core.hpp"
#include "shardann/random.hpp"

namespace shardann {

struct HnswParams {
  std::uint32_t M = 16;                ///< max degree on layers >= 1
  std::uint32_t M0 = 32;               ///< max degree on layer 0
  std::uint32_t ef_construction = 200;
  std::uint32_t ef_search = 100;
  double level_mult = 0.0;             ///< 0 selects 1/ln(M)
  std::uint64_t seed = 42;

  /// Defaults for a given M: M0 = 2M, level_mult = 1/ln(M).
  static HnswParams for_m(std::uint32_t m);

  void validate() const;
  friend bool operator==(const HnswParams&, const HnswParams&) = default;
};

/// floor(-ln(u) * level_mult) for u in (0, 1].
std::uint32_t level_for_uniform(double u, double level_mult);

/// Hierarchical navigable small world graph over one segment. Insertion is
/// single-writer; once built (or deserialized) the index is safe for
/// concurrent search.
class HnswIndex {
 public:
  HnswIndex(std::size_t dim, DistanceKind kind, HnswParams params = {});

  static HnswIndex build(const Dataset& data, DistanceKind kind, HnswParams params = {});

  /// Draws the next level from the index's seeded generator.
  std::uint32_t assign_level();

  void insert(DocId id, std::span<const float> vector);

  /// Best n neighbors using a candidate list of size ef (ef >= n). An empty
  /// index yields an empty list.
  NeighborList search(std::span<const float> query, std::size_t n, std::size_t ef) const;
  NeighborList search(std::span<const float> query, std::size_t n) const;

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t dim() const { return dim_; }
  DistanceKind distance_kind() const { return kind_; }
  const HnswParams& params() const { return params_; }
  std::uint32_t max_level() const { return max_level_; }
  std::optional<DocId> entry_point() const;

  bool contains(DocId id) const { return index_of_.contains(id); }
  std::uint32_t level_of(DocId id) const;
  std::vector<DocId> neighbors(DocId id, std::uint32_t layer) const;

  /// Stored vectors in insertion order.
  DatasetView view() const { return {dim_, ids_, data_}; }

  /// Structural problems found by walking every layer; empty when valid.
  std::vector<std::string> validate() const;

  std::vector<std::uint8_t> serialize() const;
  static HnswIndex deserialize(std::span<const std::uint8_t> bytes);

 private:
  struct Candidate {
    double dist;
    std::uint32_t node;
    DocId id;
  };
  struct Closer {
    bool operator()(const Candidate& a, const Candidate& b) const {
      return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
    }
  };
  struct Farther {
    bool operator()(const Candidate& a, const Candidate& b) const { return Closer{}(b, a); }
  };

  std::span<const float> vec(std::uint32_t node) const {
    return std::span<const float>(data_).subspan(std::size_t(node) * dim_, dim_);
  }
  double dist(std::span<const float> q, std::uint32_t node) const {
    return distance(q, vec(node), kind_);
  }
  std::span<std::uint32_t> links(std::uint32_t node, std::uint32_t layer);
  std::span<const std::uint32_t> links(std::uint32_t node, std::uint32_t layer) const;
  std::uint32_t capacity(std::uint32_t layer) const { return layer == 0 ? params_.M0 : params_.M; }
  void set_links(std::uint32_t node, std::uint32_t layer, std::span<const std::uint32_t> to);

  std::vector<Candidate> search_layer(std::span<const float> q, std::vector<Candidate> entry,
                                      std::size_t ef, std::uint32_t layer) const;
  std::vector<std::uint32_t> select_neighbors(std::vector<Candidate> sorted,
                                              std::size_t m) const;
  void connect(std::uint32_t from, std::uint32_t to, std::uint32_t layer);
  std::uint32_t add_node(DocId id, std::span<const float> vector, std::uint32_t level);

  std::size_t dim_;
  DistanceKind kind_;
  HnswParams params_;
  Rng rng_;

  std::vector<DocId> ids_;
  std::vector<float> data_;
  std::vector<std::uint32_t> levels_;
  // Layer 0: fixed (M0 + 1) slots per node, slot 0 holds the degree.
  std::vector<std::uint32_t> base_links_;
  // Layers 1..level: (M + 1) slots per layer, same layout.
  std::vector<std::vector<std::uint32_t>> upper_links_;
  std::unordered_map<DocId, std::uint32_t> index_of_;
  std::uint32_t entry_ = 0;
  std::uint32_t max_level_ = 0;
};

}  // namespace shardann
