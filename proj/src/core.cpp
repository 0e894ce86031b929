#include "shardann/core.hpp"

#include "shardann/random.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace shardann {

std::string_view to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::kEuclidean:
      return "euclidean";
    case DistanceKind::kCosine:
      return "cosine";
  }
  return "unknown";
}

DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "euclidean" || name == "l2") return DistanceKind::kEuclidean;
  if (name == "cosine") return DistanceKind::kCosine;
  throw Error("unknown distance function: " + std::string(name));
}

namespace {

// Four independent accumulators; summation order is fixed so results are
// reproducible for a given input.
double squared_l2(const float* a, const float* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double d0 = double(a[i]) - double(b[i]);
    const double d1 = double(a[i + 1]) - double(b[i + 1]);
    const double d2 = double(a[i + 2]) - double(b[i + 2]);
    const double d3 = double(a[i + 3]) - double(b[i + 3]);
    s0 += d0 * d0;
    s1 += d1 * d1;
    s2 += d2 * d2;
    s3 += d3 * d3;
  }
  for (; i < n; ++i) {
    const double d = double(a[i]) - double(b[i]);
    s0 += d * d;
  }
  return (s0 + s1) + (s2 + s3);
}

template <typename T>
double inner(const float* a, const T* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += double(a[i]) * double(b[i]);
    s1 += double(a[i + 1]) * double(b[i + 1]);
    s2 += double(a[i + 2]) * double(b[i + 2]);
    s3 += double(a[i + 3]) * double(b[i + 3]);
  }
  for (; i < n; ++i) s0 += double(a[i]) * double(b[i]);
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

double distance(std::span<const float> a, std::span<const float> b, DistanceKind kind) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  if (kind == DistanceKind::kEuclidean) {
    return std::sqrt(squared_l2(a.data(), b.data(), a.size()));
  }
  const double ab = inner(a.data(), b.data(), a.size());
  const double aa = inner(a.data(), a.data(), a.size());
  const double bb = inner(b.data(), b.data(), b.size());
  if (aa == 0.0 || bb == 0.0) throw Error("cosine distance undefined for zero-norm vector");
  return std::max(0.0, 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb)));
}

double dot(std::span<const float> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                std::to_string(b.size()));
  }
  return inner(a.data(), b.data(), a.size());
}

bool is_valid_neighbor_list(std::span<const Neighbor> list) {
  std::unordered_set<DocId> ids;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!std::isfinite(list[i].distance)) return false;
    if (!ids.insert(list[i].id).second) return false;
    if (i > 0 && !neighbor_less(list[i - 1], list[i])) return false;
  }
  return true;
}

double recall_at_k(std::span<const DocId> returned, std::span<const DocId> truth, std::size_t k) {
  if (k == 0) throw Error("recall_at_k: k must be positive");
  if (truth.size() < k) {
    throw Error("recall_at_k: truth has " + std::to_string(truth.size()) + " entries, need " +
                std::to_string(k));
  }
  std::unordered_set<DocId> expected(truth.begin(), truth.begin() + std::ptrdiff_t(k));
  const std::size_t take = std::min(k, returned.size());
  std::unordered_set<DocId> hit;
  for (std::size_t i = 0; i < take; ++i) {
    if (expected.contains(returned[i])) hit.insert(returned[i]);
  }
  return double(hit.size()) / double(k);
}

double recall_at_k(std::span<const Neighbor> returned, std::span<const Neighbor> truth,
                   std::size_t k) {
  std::vector<DocId> r(returned.size()), t(truth.size());
  std::transform(returned.begin(), returned.end(), r.begin(), [](auto& n) { return n.id; });
  std::transform(truth.begin(), truth.end(), t.begin(), [](auto& n) { return n.id; });
  return recall_at_k(r, t, k);
}

void check_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error("vector has non-finite component");
  }
}

Dataset::Dataset(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error("dataset dimension must be positive");
}

Dataset Dataset::from_rows(std::size_t dim, std::vector<float> data) {
  Dataset ds(dim);
  if (data.size() % dim != 0) throw Error("flat data length is not a multiple of dim");
  check_finite(data);
  const std::size_t n = data.size() / dim;
  ds.ids_.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.ids_[i] = i;
  ds.seen_.reserve(n);
  ds.seen_.insert(ds.ids_.begin(), ds.ids_.end());
  ds.data_ = std::move(data);
  return ds;
}

void Dataset::reserve(std::size_t rows) {
  ids_.reserve(rows);
  data_.reserve(rows * dim_);
  seen_.reserve(rows);
}

void Dataset::add(DocId id, std::span<const float> values) {
  if (dim_ == 0) throw Error("dataset has no dimension");
  if (values.size() != dim_) {
    throw Error("dimension mismatch: dataset is " + std::to_string(dim_) + ", vector is " +
                std::to_string(values.size()));
  }
  check_finite(values);
  if (!seen_.insert(id).second) throw Error("duplicate docId " + std::to_string(id));
  ids_.push_back(id);
  data_.insert(data_.end(), values.begin(), values.end());
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out(dim_);
  out.reserve(rows.size());
  for (std::size_t r : rows) {
    out.ids_.push_back(ids_[r]);
    out.seen_.insert(ids_[r]);
    auto v = row(r);
    out.data_.insert(out.data_.end(), v.begin(), v.end());
  }
  return out;
}

void Dataset::validate_for(DistanceKind kind) const {
  if (kind != DistanceKind::kCosine) return;
  for (std::size_t i = 0; i < size(); ++i) {
    bool nonzero = false;
    for (float v : row(i)) nonzero |= (v != 0.0f);
    if (!nonzero) throw Error("zero-norm vector for docId " + std::to_string(ids_[i]) +
                              " under cosine distance");
  }
}

Dataset sample_rows(const Dataset& data, std::size_t count, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (count >= n) return data;
  // Partial Fisher-Yates over row indices.
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(rows[i], rows[i + rng.below(n - i)]);
  }
  rows.resize(count);
  std::sort(rows.begin(), rows.end());
  return data.subset(rows);
}

}  // namespace shardann
