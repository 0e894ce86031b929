#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shardann/core.hpp"
#include "shardann/hnsw.hpp"
#include "shardann/segmenter.hpp"

namespace shardann {

enum class SpillMode : std::uint8_t {
  kVirtual,   ///< each document stored once; queries may visit several segments
  kPhysical,  ///< documents in a spill band stored in both children
};

std::string_view to_string(SpillMode mode);
SpillMode parse_spill_mode(std::string_view name);

/// FNV-1a 64 of the key, modulo the shard count.
std::uint32_t shard_of(std::string_view key, std::uint32_t num_shards);

/// Default sharding key: the decimal docId.
std::string default_key(DocId id);

/// (n, m)-partitioning: n shards, every shard split by the same segmenter.
struct PartitionSpec {
  std::uint32_t num_shards = 1;
  SegmenterTree segmenter = SegmenterTree::random(1);
};

struct BuildOptions {
  HnswParams hnsw;
  DistanceKind distance = DistanceKind::kEuclidean;
  std::size_t workers = 1;
  SpillMode spill = SpillMode::kVirtual;
  /// Optional per-row sharding keys; defaults to default_key(docId).
  std::span<const std::string> keys;
};

/// Shards x segments grid of HNSW indices. Empty cells hold no index.
class PartitionedIndex {
 public:
  static PartitionedIndex build(const Dataset& data, const PartitionSpec& spec,
                                const BuildOptions& options);

  /// Writes manifest.json plus one segment file per non-empty cell.
  void save(const std::string& directory) const;
  static PartitionedIndex load(const std::string& directory);

  std::uint32_t num_shards() const { return spec_.num_shards; }
  std::uint32_t num_segments() const { return spec_.segmenter.num_segments(); }
  const SegmenterTree& segmenter() const { return spec_.segmenter; }
  const HnswParams& hnsw_params() const { return params_; }
  DistanceKind distance_kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  std::size_t doc_count() const { return doc_count_; }
  SpillMode spill_mode() const { return spill_; }

  /// nullptr for an empty cell.
  const HnswIndex* segment(std::uint32_t shard, std::uint32_t segment) const;
  std::size_t segment_size(std::uint32_t shard, std::uint32_t segment) const;
  /// Total stored vectors, counting physical-spill copies.
  std::size_t stored_count() const;

  std::string manifest_json() const;

 private:
  std::size_t cell(std::uint32_t shard, std::uint32_t segment) const;

  PartitionSpec spec_;
  HnswParams params_;
  DistanceKind kind_ = DistanceKind::kEuclidean;
  std::size_t dim_ = 0;
  std::size_t doc_count_ = 0;
  SpillMode spill_ = SpillMode::kVirtual;
  std::vector<std::optional<HnswIndex>> cells_;
};

/// Seed for the HNSW of a given cell; cell 0 keeps the base seed.
std::uint64_t cell_seed(std::uint64_t base, std::size_t cell);

}  // namespace shardann
