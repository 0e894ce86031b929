#include "shardann/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace shardann {

namespace {

std::vector<double> sorted_distances(std::span<const float> q, const DatasetView& data) {
  std::vector<double> d(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    d[i] = distance(q, data.row(i), DistanceKind::kEuclidean);
  }
  std::sort(d.begin(), d.end());
  return d;
}

// Potential without the 1/m factor, so the bound can reuse it across scales.
double unscaled_potential(const std::vector<double>& d, std::size_t k) {
  if (k == 0) throw Error("potential: k must be positive");
  if (d.size() <= k) throw Error("potential: need more than k data points");
  double head = 0.0;
  for (std::size_t j = 0; j < k; ++j) head += d[j];
  head /= double(k);
  if (head == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = k; i < d.size(); ++i) sum += head / d[i];
  return sum;
}

void check_bound_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw Error("failure bound: alpha must lie in (0, 0.5)");
}

}  // namespace

double potential(std::span<const float> q, const DatasetView& data, std::size_t k, double m) {
  if (!(m > 0.0)) throw Error("potential: m must be positive");
  return unscaled_potential(sorted_distances(q, data), k) / m;
}

double failure_bound(std::span<const float> q, const DatasetView& data, std::size_t k,
                     double alpha, std::uint32_t levels) {
  check_bound_alpha(alpha);
  const double base = unscaled_potential(sorted_distances(q, data), k);
  const double n = double(data.size());
  double sum = 0.0;
  for (std::uint32_t i = 0; i <= levels; ++i) sum += base / (std::pow(0.5 + alpha, i) * n);
  return k == 1 ? sum / (2.0 * alpha) : double(k) / alpha * sum;
}

double failure_bound_estimate(std::size_t n, double alpha, std::uint32_t levels) {
  if (n == 0) throw Error("failure_bound_estimate: n must be positive");
  if (levels == 0) throw Error("failure_bound_estimate: levels must be >= 1");
  double sum = 0.0;
  for (std::uint32_t i = 1; i <= levels; ++i) {
    sum += 1.0 / (2.0 * std::pow(0.5 + alpha, i) * double(n));
  }
  return sum;
}

}  // namespace shardann
