#include "shardann/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "shardann/detail/binary.hpp"
#include "shardann/hash.hpp"
#include "shardann/random.hpp"

namespace shardann {

namespace {

constexpr int kFormatVersion = 1;

std::size_t floor_rank(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * double(n)));
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha < 0.5)) throw Error("alpha must lie in [0, 0.5)");
}

std::vector<double> project(const Dataset& data, std::span<const std::size_t> rows,
                            std::span<const double> normal) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = dot(data.row(rows[i]), normal);
  return out;
}

// Level-order construction shared by RH and APD; `make_normal` receives the
// node's rows.
template <typename MakeNormal>
std::vector<HyperplaneNode> grow_tree(const Dataset& sample, std::uint32_t levels, double alpha,
                                      MakeNormal make_normal) {
  const std::size_t internal = (std::size_t{1} << levels) - 1;
  std::vector<HyperplaneNode> nodes(internal);
  std::vector<std::vector<std::size_t>> rows(internal);
  if (internal == 0) return nodes;
  rows[0].resize(sample.size());
  std::iota(rows[0].begin(), rows[0].end(), std::size_t{0});
  for (std::size_t i = 0; i < internal; ++i) {
    if (rows[i].size() < 2) {
      throw Error("segmenter: node " + std::to_string(i) + " has " +
                  std::to_string(rows[i].size()) + " sample points; need at least 2");
    }
    HyperplaneNode& node = nodes[i];
    node.normal = make_normal(rows[i]);
    const auto proj = project(sample, rows[i], node.normal);
    const auto sp = fractile_split(proj, alpha);
    node.split = sp.split;
    node.lo = sp.lo;
    node.hi = sp.hi;
    const std::size_t left = 2 * i + 1;
    if (left < internal) {
      for (std::size_t r = 0; r < proj.size(); ++r) {
        rows[proj[r] < node.split ? left : left + 1].push_back(rows[i][r]);
      }
    }
    rows[i].clear();
    rows[i].shrink_to_fit();
  }
  return nodes;
}

double angle_between(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i];
  double perp = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double r = a[i] - ab * b[i];
    perp += r * r;
  }
  return std::atan2(std::sqrt(perp), std::abs(ab));
}

double normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0) {
    for (double& x : v) x /= n;
  }
  return n;
}

void remove_component(std::vector<double>& v, std::span<const double> unit) {
  double c = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) c += v[i] * unit[i];
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * unit[i];
}

class Gram {
 public:
  explicit Gram(const DatasetView& rows) : d_(rows.dim), g_(d_ * d_, 0.0) {
    std::vector<double> x(d_);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto v = rows.row(r);
      for (std::size_t i = 0; i < d_; ++i) x[i] = v[i];
      for (std::size_t i = 0; i < d_; ++i) {
        const double xi = x[i];
        double* gi = &g_[i * d_];
        for (std::size_t j = i; j < d_; ++j) gi[j] += xi * x[j];
      }
    }
    for (std::size_t i = 0; i < d_; ++i) {
      for (std::size_t j = 0; j < i; ++j) g_[i * d_ + j] = g_[j * d_ + i];
    }
  }

  std::vector<double> apply(std::span<const double> v) const {
    std::vector<double> out(d_, 0.0);
    for (std::size_t i = 0; i < d_; ++i) {
      const double* gi = &g_[i * d_];
      double s = 0.0;
      for (std::size_t j = 0; j < d_; ++j) s += gi[j] * v[j];
      out[i] = s;
    }
    return out;
  }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < d_; ++i) t += g_[i * d_ + i];
    return t;
  }

 private:
  std::size_t d_;
  std::vector<double> g_;
};

struct PowerResult {
  std::vector<double> vector;
  double eigenvalue;
};

// Power iteration, optionally restricted to the complement of `exclude`.
PowerResult power_iterate(const Gram& gram, std::vector<double> v,
                          std::span<const double> exclude, double scale,
                          const PowerIterationOptions& opt, const char* what) {
  if (!exclude.empty()) remove_component(v, exclude);
  if (normalize(v) == 0.0) throw Error(std::string("power iteration: degenerate start for ") + what);
  double residual = 0.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    auto next = gram.apply(v);
    if (!exclude.empty()) remove_component(next, exclude);
    const double norm = normalize(next);
    if (norm <= 1e-12 * scale) {
      throw Error(std::string("second_singular_vector: sample has rank < 2 (") + what + ")");
    }
    residual = angle_between(next, v);
    v = std::move(next);
    if (residual < opt.angle_tolerance) return {v, norm};
  }
  throw Error(std::string("second_singular_vector: power iteration for ") + what +
              " did not converge in " + std::to_string(opt.max_iterations) +
              " iterations (residual angle " + std::to_string(residual) + ")");
}

}  // namespace

std::string_view to_string(SegmenterKind kind) {
  switch (kind) {
    case SegmenterKind::kRandom:
      return "rs";
    case SegmenterKind::kRandomHyperplane:
      return "rh";
    case SegmenterKind::kApd:
      return "apd";
  }
  return "unknown";
}

SegmenterKind parse_segmenter_kind(std::string_view name) {
  if (name == "rs" || name == "random") return SegmenterKind::kRandom;
  if (name == "rh" || name == "random-hyperplane") return SegmenterKind::kRandomHyperplane;
  if (name == "apd") return SegmenterKind::kApd;
  throw Error("unknown segmenter strategy: " + std::string(name));
}

SplitPoints fractile_split(std::vector<double> projections, double alpha) {
  check_alpha(alpha);
  const std::size_t n = projections.size();
  if (n == 0) throw Error("fractile_split: no projections");
  std::sort(projections.begin(), projections.end());
  return {projections[n / 2], projections[floor_rank(0.5 - alpha, n)],
          projections[std::min(n - 1, floor_rank(0.5 + alpha, n))]};
}

SegmenterTree SegmenterTree::random(std::uint32_t num_segments) {
  if (num_segments == 0) throw Error("random segmenter needs at least one segment");
  SegmenterTree t;
  t.kind_ = SegmenterKind::kRandom;
  t.num_segments_ = num_segments;
  return t;
}

SegmenterTree SegmenterTree::from_nodes(SegmenterKind kind, std::size_t dim,
                                        std::uint32_t levels, double alpha, std::uint64_t seed,
                                        std::vector<HyperplaneNode> nodes) {
  if (kind == SegmenterKind::kRandom) throw Error("random segmenter has no hyperplanes");
  if (levels > 20) throw Error("segmenter depth too large");
  check_alpha(alpha);
  if (nodes.size() != (std::size_t{1} << levels) - 1) {
    throw Error("segmenter: expected " + std::to_string((1u << levels) - 1) + " nodes, got " +
                std::to_string(nodes.size()));
  }
  if (levels > 0 && dim == 0) throw Error("segmenter: dimension must be positive");
  for (const auto& n : nodes) {
    if (n.normal.size() != dim) throw Error("segmenter: hyperplane dimension mismatch");
    if (!(n.lo <= n.split && n.split <= n.hi)) throw Error("segmenter: require lo <= split <= hi");
  }
  SegmenterTree t;
  t.kind_ = kind;
  t.dim_ = dim;
  t.levels_ = levels;
  t.alpha_ = alpha;
  t.seed_ = seed;
  t.num_segments_ = 1u << levels;
  t.nodes_ = std::move(nodes);
  return t;
}

void SegmenterTree::check_dim(std::size_t n) const {
  if (dim_ != 0 && n != dim_) {
    throw Error("segmenter: dimension mismatch (" + std::to_string(n) + " vs " +
                std::to_string(dim_) + ")");
  }
}

std::uint32_t SegmenterTree::route_document(std::span<const float> x) const {
  if (kind_ == SegmenterKind::kRandom) {
    throw Error("random segmenter routes documents by key");
  }
  return route_document(x, {});
}

std::uint32_t SegmenterTree::route_document(std::span<const float> x,
                                            std::string_view key) const {
  check_dim(x.size());
  if (kind_ == SegmenterKind::kRandom) {
    return static_cast<std::uint32_t>(fnv1a64("seg", fnv1a64(key)) % num_segments_);
  }
  std::size_t i = 0;
  const std::size_t internal = nodes_.size();
  while (i < internal) {
    const auto& n = nodes_[i];
    i = dot(x, n.normal) < n.split ? 2 * i + 1 : 2 * i + 2;
  }
  return static_cast<std::uint32_t>(i - internal);
}

std::vector<std::uint32_t> SegmenterTree::route_band(std::span<const float> x) const {
  check_dim(x.size());
  const std::size_t internal = nodes_.size();
  std::vector<std::uint32_t> out;
  std::vector<std::size_t> stack{0};
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    if (i >= internal) {
      out.push_back(static_cast<std::uint32_t>(i - internal));
      continue;
    }
    const auto& n = nodes_[i];
    const double p = dot(x, n.normal);
    if (p >= n.lo) stack.push_back(2 * i + 2);
    if (p <= n.hi) stack.push_back(2 * i + 1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint32_t> SegmenterTree::route_document_spilled(std::span<const float> x,
                                                                 std::string_view key) const {
  if (kind_ == SegmenterKind::kRandom) return {route_document(x, key)};
  return route_band(x);
}

std::vector<std::uint32_t> SegmenterTree::route_query(std::span<const float> q) const {
  if (kind_ == SegmenterKind::kRandom) {
    check_dim(q.size());
    std::vector<std::uint32_t> all(num_segments_);
    std::iota(all.begin(), all.end(), 0u);
    return all;
  }
  return route_band(q);
}

std::string SegmenterTree::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "shardann-segmenter";
  j["version"] = kFormatVersion;
  j["kind"] = std::string(to_string(kind_));
  j["levels"] = levels_;
  j["alpha"] = alpha_;
  j["seed"] = seed_;
  j["numSegments"] = num_segments_;
  j["dim"] = dim_;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& n : nodes_) {
    nlohmann::ordered_json node;
    node["h"] = n.normal;
    node["split"] = n.split;
    node["lo"] = n.lo;
    node["hi"] = n.hi;
    nodes.push_back(std::move(node));
  }
  j["nodes"] = std::move(nodes);
  return j.dump();
}

SegmenterTree SegmenterTree::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "shardann-segmenter") {
      throw Error("segmenter: not a segmenter document");
    }
    if (const int v = j.at("version").get<int>(); v != kFormatVersion) {
      throw Error("segmenter: unsupported version " + std::to_string(v));
    }
    const auto kind = parse_segmenter_kind(j.at("kind").get<std::string>());
    const auto num_segments = j.at("numSegments").get<std::uint32_t>();
    if (kind == SegmenterKind::kRandom) {
      auto t = random(num_segments);
      t.seed_ = j.at("seed").get<std::uint64_t>();
      return t;
    }
    std::vector<HyperplaneNode> nodes;
    for (const auto& n : j.at("nodes")) {
      nodes.push_back({n.at("h").get<std::vector<double>>(), n.at("split").get<double>(),
                       n.at("lo").get<double>(), n.at("hi").get<double>()});
    }
    auto t = from_nodes(kind, j.at("dim").get<std::size_t>(), j.at("levels").get<std::uint32_t>(),
                        j.at("alpha").get<double>(), j.at("seed").get<std::uint64_t>(),
                        std::move(nodes));
    if (t.num_segments_ != num_segments) throw Error("segmenter: numSegments inconsistent");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("segmenter: malformed document: ") + e.what());
  }
}

void SegmenterTree::save(const std::string& path) const {
  const auto text = to_json();
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                     text.size()));
}

SegmenterTree SegmenterTree::load(const std::string& path) {
  const auto bytes = detail::read_file(path);
  return from_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

SegmenterTree learn_rh(const Dataset& sample, std::uint32_t levels, double alpha,
                       std::uint64_t seed) {
  check_alpha(alpha);
  if (levels > 20) throw Error("segmenter depth too large");
  if (sample.size() < (std::size_t{2} << levels)) {
    throw Error("learn_rh: sample of " + std::to_string(sample.size()) +
                " points is too small for " + std::to_string(levels) + " levels");
  }
  Rng rng(seed);
  const std::size_t d = sample.dim();
  auto nodes = grow_tree(sample, levels, alpha, [&](std::span<const std::size_t>) {
    std::vector<double> h(d);
    do {
      for (double& x : h) x = rng.normal();
    } while (normalize(h) == 0.0);
    return h;
  });
  return SegmenterTree::from_nodes(SegmenterKind::kRandomHyperplane, d, levels, alpha, seed,
                                   std::move(nodes));
}

SegmenterTree learn_apd(const Dataset& sample, std::uint32_t levels, double alpha) {
  check_alpha(alpha);
  if (levels > 20) throw Error("segmenter depth too large");
  if (sample.size() < (std::size_t{2} << levels)) {
    throw Error("learn_apd: sample of " + std::to_string(sample.size()) +
                " points is too small for " + std::to_string(levels) + " levels");
  }
  auto nodes = grow_tree(sample, levels, alpha, [&](std::span<const std::size_t> rows) {
    return second_singular_vector(sample.subset(rows).view());
  });
  return SegmenterTree::from_nodes(SegmenterKind::kApd, sample.dim(), levels, alpha, 0,
                                   std::move(nodes));
}

std::vector<double> second_singular_vector(const DatasetView& sample,
                                           const PowerIterationOptions& options) {
  if (sample.size() < 2) throw Error("second_singular_vector: need at least 2 rows");
  if (sample.dim < 2) throw Error("second_singular_vector: need dimension >= 2");
  const Gram gram(sample);
  const double scale = gram.trace();
  if (scale == 0.0) throw Error("second_singular_vector: sample has rank < 2 (zero matrix)");

  Rng rng(options.start_seed);
  std::vector<double> start(sample.dim);
  for (double& x : start) x = rng.normal();

  const auto top = power_iterate(gram, start, {}, scale, options, "top vector");
  auto second = power_iterate(gram, start, top.vector, scale, options, "second vector").vector;

  // Components below the convergence tolerance are indistinguishable from zero.
  const double sign_threshold = 10.0 * options.angle_tolerance;
  for (double x : second) {
    if (std::abs(x) > sign_threshold) {
      if (x < 0) {
        for (double& y : second) y = -y;
      }
      break;
    }
  }
  return second;
}

}  // namespace shardann
