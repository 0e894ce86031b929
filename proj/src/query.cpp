#include "shardann/query.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "shardann/exact_search.hpp"
#include "shardann/parallel.hpp"

namespace shardann {

namespace {

// Acklam's rational approximation for the lower half (p <= 0.5), relative
// error below 1.2e-9 before refinement.
double probit_lower(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  // Newton step on Phi(x) - p.
  const double err = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double density = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return x - err / density;
}

double percentile(std::vector<double> sorted_values, double pct) {
  if (sorted_values.empty()) return 0.0;
  // Nearest-rank.
  const auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * double(sorted_values.size())));
  return sorted_values[std::clamp<std::size_t>(rank, 1, sorted_values.size()) - 1];
}

}  // namespace

double probit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error("probit: argument must lie in (0, 1)");
  if (p > 0.5) return -probit_lower(1.0 - p);
  return probit_lower(p);
}

std::size_t per_shard_topk(std::size_t top_k, std::uint32_t num_shards, double confidence,
                           QuantileMode mode) {
  if (top_k == 0) throw Error("per_shard_topk: topK must be positive");
  if (num_shards == 0) throw Error("per_shard_topk: shard count must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw Error("per_shard_topk: confidence must lie in (0, 1)");
  }
  const double f = mode == QuantileMode::kTwoSided ? probit((1.0 + confidence) / 2.0)
                                                   : probit(1.0 - confidence / 2.0);
  const double share = 1.0 / double(num_shards);
  const double ci = share + f * std::sqrt(share * (1.0 - share) / double(top_k));
  const double want = std::ceil(ci * double(top_k));
  if (!(want < double(top_k))) return top_k;
  return std::max<std::size_t>(1, static_cast<std::size_t>(want));
}

NeighborList merge(std::span<const NeighborList> lists, std::size_t k) {
  NeighborList all;
  std::size_t total = 0;
  for (const auto& l : lists) total += l.size();
  all.reserve(total);
  for (const auto& l : lists) all.insert(all.end(), l.begin(), l.end());
  std::sort(all.begin(), all.end(), neighbor_less);
  NeighborList out;
  out.reserve(std::min(k, all.size()));
  std::unordered_set<DocId> seen;
  for (const auto& n : all) {
    if (out.size() >= k) break;
    if (seen.insert(n.id).second) out.push_back(n);
  }
  return out;
}

void QueryConfig::validate() const {
  if (top_k == 0) throw Error("query: topK must be positive");
  if (ef_search == 0) throw Error("query: efSearch must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw Error("query: confidence must lie in (0, 1)");
  }
}

std::size_t effective_shard_k(const PartitionedIndex& index, const QueryConfig& cfg) {
  return cfg.use_per_shard_topk
             ? per_shard_topk(cfg.top_k, index.num_shards(), cfg.confidence, cfg.quantile)
             : cfg.top_k;
}

NeighborList query(const PartitionedIndex& index, std::span<const float> q,
                   const QueryConfig& cfg) {
  cfg.validate();
  if (q.size() != index.dim()) {
    throw Error("query: dimension mismatch (" + std::to_string(q.size()) + " vs " +
                std::to_string(index.dim()) + ")");
  }
  if (index.doc_count() == 0) return {};
  check_finite(q);

  const std::size_t shard_k = effective_shard_k(index, cfg);
  const std::size_t ef = std::max(cfg.ef_search, shard_k);

  std::vector<std::uint32_t> segments;
  if (cfg.route_all) {
    segments.resize(index.num_segments());
    for (std::uint32_t s = 0; s < segments.size(); ++s) segments[s] = s;
  } else {
    segments = index.segmenter().route_query(q);
  }

  std::vector<NeighborList> shard_lists;
  shard_lists.reserve(index.num_shards());
  std::vector<NeighborList> segment_lists;
  for (std::uint32_t shard = 0; shard < index.num_shards(); ++shard) {
    segment_lists.clear();
    for (std::uint32_t seg : segments) {
      const HnswIndex* hnsw = index.segment(shard, seg);
      if (!hnsw) continue;
      segment_lists.push_back(cfg.segment_search == SegmentSearch::kExact
                                  ? exact_topk(hnsw->view(), q, shard_k, index.distance_kind())
                                  : hnsw->search(q, shard_k, ef));
    }
    shard_lists.push_back(merge(segment_lists, shard_k));
  }
  return merge(shard_lists, cfg.top_k);
}

std::string BatchReport::to_json() const {
  nlohmann::ordered_json j;
  j["count"] = count;
  j["wallSeconds"] = wall_seconds;
  j["qps"] = qps;
  j["latencyMsP50"] = latency_ms_p50;
  j["latencyMsP99"] = latency_ms_p99;
  j["latencyMsMean"] = latency_ms_mean;
  j["failures"] = failures;
  return j.dump(2);
}

BatchResult batch_query(const PartitionedIndex& index, const DatasetView& queries,
                        const QueryConfig& cfg, std::size_t workers) {
  using Clock = std::chrono::steady_clock;
  if (workers == 0) throw Error("batch_query: workers must be positive");
  BatchResult out;
  const std::size_t n = queries.size();
  out.results.resize(n);
  out.errors.resize(n);
  out.report.count = n;
  if (n == 0) return out;

  std::vector<double> latency_ms(n, 0.0);
  const auto start = Clock::now();
  parallel_for(n, workers, [&](std::size_t i) {
    const auto t0 = Clock::now();
    try {
      out.results[i] = query(index, queries.row(i), cfg);
    } catch (const std::exception& e) {
      out.errors[i] = e.what();
    }
    latency_ms[i] = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
  });
  const double wall = std::chrono::duration<double>(Clock::now() - start).count();

  auto& r = out.report;
  r.wall_seconds = wall;
  r.qps = wall > 0.0 ? double(n) / wall : 0.0;
  double sum = 0.0;
  for (double l : latency_ms) sum += l;
  r.latency_ms_mean = sum / double(n);
  std::sort(latency_ms.begin(), latency_ms.end());
  r.latency_ms_p50 = percentile(latency_ms, 50.0);
  r.latency_ms_p99 = percentile(latency_ms, 99.0);
  r.failures = static_cast<std::size_t>(
      std::count_if(out.errors.begin(), out.errors.end(), [](auto& e) { return !e.empty(); }));
  return out;
}

}  // namespace shardann
