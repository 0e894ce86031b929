#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace shardann {

/// Thrown for every recoverable failure: bad input, malformed files, violated
/// preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using DocId = std::uint64_t;

enum class DistanceKind : std::uint8_t {
  kEuclidean = 0,
  kCosine = 1,
};

std::string_view to_string(DistanceKind kind);
DistanceKind parse_distance_kind(std::string_view name);

/// Distance between two equal-length vectors. Storage is float32, the
/// accumulation is always double. Cosine distance is 1 - cos(a, b), clamped
/// at zero; zero-norm inputs are rejected.
double distance(std::span<const float> a, std::span<const float> b, DistanceKind kind);

/// Dot product of a float vector with a double vector, accumulated in double.
double dot(std::span<const float> a, std::span<const double> b);

struct Neighbor {
  DocId id = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Ordering used everywhere results are ranked: distance first, then docId.
inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.id < b.id;
}

/// Sorted ascending by (distance, docId) with unique ids.
using NeighborList = std::vector<Neighbor>;

bool is_valid_neighbor_list(std::span<const Neighbor> list);

/// |first min(k, |returned|) returned ids  ∩  first k truth ids| / k.
double recall_at_k(std::span<const DocId> returned, std::span<const DocId> truth, std::size_t k);
double recall_at_k(std::span<const Neighbor> returned, std::span<const Neighbor> truth,
                   std::size_t k);

/// Non-owning view over row-major vectors and their ids.
struct DatasetView {
  std::size_t dim = 0;
  std::span<const DocId> ids;
  std::span<const float> data;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  std::span<const float> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

/// Fixed-dimension vectors keyed by unique docIds. Rows are kept in insertion
/// order in one contiguous float buffer.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t dim);

  /// Rows get positional ids 0..n-1.
  static Dataset from_rows(std::size_t dim, std::vector<float> data);

  void reserve(std::size_t rows);
  void add(DocId id, std::span<const float> values);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  DocId id(std::size_t row) const { return ids_[row]; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(data_).subspan(i * dim_, dim_);
  }
  std::span<const DocId> ids() const { return ids_; }
  std::span<const float> data() const { return data_; }
  DatasetView view() const { return {dim_, ids_, data_}; }

  /// Copies the given rows, preserving their ids.
  Dataset subset(std::span<const std::size_t> rows) const;

  /// Rejects zero-norm rows when the metric is cosine.
  void validate_for(DistanceKind kind) const;

 private:
  std::size_t dim_ = 0;
  std::vector<DocId> ids_;
  std::vector<float> data_;
  std::unordered_set<DocId> seen_;
};

void check_finite(std::span<const float> values);

/// min(count, n) rows drawn uniformly without replacement, kept in original
/// row order. Deterministic for a given seed.
Dataset sample_rows(const Dataset& data, std::size_t count, std::uint64_t seed);

}  // namespace shardann
