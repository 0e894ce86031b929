// Acceptance suite. Prints one PASS/FAIL line per criterion.
//
//   shardann_acceptance            run every criterion
//   shardann_acceptance 2 3 4      run the listed criteria only
//
// Exit status is 0 only when every selected criterion passes.

#include <boost/math/distributions/normal.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "shardann/bounds.hpp"
#include "shardann/exact_search.hpp"
#include "shardann/partitioned_index.hpp"
#include "shardann/query.hpp"
#include "shardann/segmenter.hpp"
#include "shardann/synthetic.hpp"

using namespace shardann;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double mean_recall(const std::vector<NeighborList>& got, const std::vector<NeighborList>& truth,
                   std::size_t k) {
  double s = 0;
  for (std::size_t i = 0; i < got.size(); ++i) s += recall_at_k(got[i], truth[i], k);
  return got.empty() ? 0.0 : s / double(got.size());
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() /
              ("shardann-acceptance-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::map<std::string, std::vector<char>> dir_bytes(const fs::path& dir) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    out[e.path().filename().string()] = {std::istreambuf_iterator<char>(in), {}};
  }
  return out;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---------------------------------------------------------------------------
// Shared clustered benchmark for the recall criteria (2, 3, 4, 11): 100k
// vectors from a 64-component mixture in a 32-dim subspace of R^128, 1k
// held-out queries from the same mixture.

constexpr std::size_t kBenchDocs = 100'000;
constexpr std::size_t kBenchQueries = 1'000;
constexpr std::size_t kSegmenterSample = 25'000;
constexpr std::uint64_t kSeed = 42;

struct Bench {
  Dataset data;
  Dataset queries;
  Dataset sample;
  std::vector<NeighborList> truth;
};

const Bench& bench() {
  static const Bench b = [] {
    MixtureSpec ms;
    ms.dim = 128;
    ms.latent_dim = 32;
    ms.clusters = 64;
    ms.offset = 20.0;
    ms.noise = 0.5;
    ms.seed = 7;
    const GaussianMixture mix(ms);
    Bench out;
    out.data = mix.sample(kBenchDocs, 1);
    out.queries = mix.sample(kBenchQueries, 2, 1'000'000'000);
    out.sample = sample_rows(out.data, kSegmenterSample, kSeed);
    const auto t = Clock::now();
    out.truth = partitioned_exact(out.data.view(), out.queries.view(), 100,
                                  DistanceKind::kEuclidean, 1, 1);
    std::printf("  [bench] %zu x %zu docs, %zu queries, ground truth in %.1fs\n",
                out.data.size(), out.data.dim(), out.queries.size(), seconds_since(t));
    return out;
  }();
  return b;
}

struct RunResult {
  double recall100 = 0;
  double recall15 = 0;
  double build_seconds = 0;
};

RunResult run_config(const std::string& label, std::uint32_t shards,
                     const SegmenterTree& segmenter) {
  const auto& b = bench();
  BuildOptions opt;
  opt.hnsw = HnswParams{};  // M=16, efConstruction=200
  opt.hnsw.seed = kSeed;
  auto t = Clock::now();
  const auto index = PartitionedIndex::build(b.data, PartitionSpec{shards, segmenter}, opt);
  RunResult r;
  r.build_seconds = seconds_since(t);
  QueryConfig cfg;
  cfg.top_k = 100;
  cfg.ef_search = 200;
  cfg.confidence = 0.95;
  const auto res = batch_query(index, b.queries.view(), cfg, 1);
  r.recall100 = mean_recall(res.results, b.truth, 100);
  r.recall15 = mean_recall(res.results, b.truth, 15);
  std::printf("  [bench] %-14s R@100 %.4f  R@15 %.4f  build %.1fs  query %.1fs\n", label.c_str(),
              r.recall100, r.recall15, r.build_seconds, res.report.wall_seconds);
  std::fflush(stdout);
  return r;
}

// Memoized so criteria sharing a configuration build it once per process.
const RunResult& config(const std::string& name) {
  static std::map<std::string, RunResult> cache;
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  const auto& b = bench();
  RunResult r;
  if (name == "HNSW") r = run_config(name, 1, SegmenterTree::random(1));
  else if (name == "RS(1,8)") r = run_config(name, 1, SegmenterTree::random(8));
  else if (name == "RH(1,8)") r = run_config(name, 1, learn_rh(b.sample, 3, 0.15, kSeed));
  else if (name == "APD(1,8)") r = run_config(name, 1, learn_apd(b.sample, 3, 0.15));
  else if (name == "APD(2,4)") r = run_config(name, 2, learn_apd(b.sample, 2, 0.15));
  else if (name == "APD(1,8)a.05") r = run_config(name, 1, learn_apd(b.sample, 3, 0.05));
  return cache.emplace(name, r).first->second;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto start = Clock::now();
  const auto data = uniform_dataset(10'000, 32, 101);
  const auto queries = uniform_dataset(100, 32, 102);
  BuildOptions opt;
  opt.hnsw.seed = kSeed;
  const auto index = PartitionedIndex::build(
      data, PartitionSpec{2, learn_rh(data, 2, 0.15, kSeed)}, opt);
  QueryConfig cfg;
  cfg.top_k = 100;
  cfg.use_per_shard_topk = false;
  cfg.segment_search = SegmentSearch::kExact;
  cfg.route_all = true;
  std::size_t mismatched = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto got = query(index, queries.row(q), cfg);
    const auto want = exact_topk(data.view(), queries.row(q), 100, DistanceKind::kEuclidean);
    mismatched += got != want;
  }
  const double secs = seconds_since(start);
  return {mismatched == 0 && secs < 60.0,
          fmt("%zu/100 queries differ from brute force (ids+distances), %.1fs", mismatched,
              secs)};
}

Outcome criterion2() {
  const auto& r = config("HNSW");
  return {r.recall100 >= 0.95 && r.build_seconds < 1200.0,
          fmt("HNSW R@100 = %.4f (need >= 0.95), build %.1fs (need < 1200s)", r.recall100,
              r.build_seconds)};
}

Outcome criterion3() {
  const auto& base = config("HNSW");
  const auto& rs = config("RS(1,8)");
  const double gap = std::abs(rs.recall100 - base.recall100);
  return {gap <= 0.02, fmt("RS(1,8) R@100 = %.4f vs HNSW %.4f, |gap| = %.4f (need <= 0.02)",
                           rs.recall100, base.recall100, gap)};
}

Outcome criterion4() {
  const auto& rh = config("RH(1,8)");
  const auto& apd18 = config("APD(1,8)");
  const auto& apd24 = config("APD(2,4)");
  const bool first = apd18.recall100 > rh.recall100;
  const bool second = apd24.recall100 >= apd18.recall100;
  return {first && second,
          fmt("APD(1,8) %.4f > RH(1,8) %.4f: %s; APD(2,4) %.4f >= APD(1,8) %.4f: %s",
              apd18.recall100, rh.recall100, first ? "yes" : "no", apd24.recall100,
              apd18.recall100, second ? "yes" : "no")};
}

Outcome criterion5() {
  MixtureSpec ms;
  ms.dim = 64;
  ms.latent_dim = 16;
  ms.offset = 10.0;
  ms.noise = 0.5;
  ms.seed = 5;
  const auto sample = GaussianMixture(ms).sample(20'000, 3);
  std::size_t nodes_checked = 0, nodes_bad = 0;
  double worst_root_dev = 0.0;
  for (const auto& tree : {learn_rh(sample, 3, 0.15, kSeed), learn_apd(sample, 3, 0.15)}) {
    // Walk the training sample down the tree, collecting each node's members.
    std::vector<std::vector<std::size_t>> members(tree.nodes().size());
    for (std::size_t r = 0; r < sample.size(); ++r) {
      std::size_t i = 0;
      while (i < tree.nodes().size()) {
        members[i].push_back(r);
        const auto& n = tree.nodes()[i];
        i = dot(sample.row(r), n.normal) < n.split ? 2 * i + 1 : 2 * i + 2;
      }
    }
    for (std::size_t i = 0; i < tree.nodes().size(); ++i) {
      const auto& n = tree.nodes()[i];
      const std::size_t m = members[i].size();
      std::size_t inside = 0;
      for (std::size_t r : members[i]) {
        const double p = dot(sample.row(r), n.normal);
        inside += (p >= n.lo && p <= n.hi);
      }
      const auto lo_rank = std::size_t(std::floor((0.5 - 0.15) * double(m)));
      const auto hi_rank = std::min(m - 1, std::size_t(std::floor((0.5 + 0.15) * double(m))));
      ++nodes_checked;
      nodes_bad += inside != hi_rank - lo_rank + 1;
      if (i == 0) worst_root_dev = std::max(worst_root_dev, std::abs(double(inside) - 0.3 * double(m)));
    }
  }
  return {nodes_bad == 0 && worst_root_dev <= 1.0,
          fmt("%zu/%zu nodes match the rank count exactly; root band deviates %.2f points from "
              "30%% (need <= 1)",
              nodes_checked - nodes_bad, nodes_checked, worst_root_dev)};
}

Outcome criterion6() {
  auto reference = [](std::size_t k, std::uint32_t s, double p) {
    const long double sp = 1.0L / s;
    const long double f = boost::math::quantile(boost::math::normal(), (1.0 + p) / 2.0);
    const long double ci = sp + f * std::sqrt(sp * (1.0L - sp) / (long double)k);
    return std::max<std::size_t>(1, std::min<std::size_t>(k, (std::size_t)std::ceil(ci * k)));
  };
  struct Row {
    std::size_t k;
    std::uint32_t s;
    std::size_t expected;
  };
  const Row rows[] = {{100, 1, 100}, {250, 1, 250}, {100, 2, 60}, {100, 20, 10}};
  bool ok = true;
  std::string detail;
  for (const auto& r : rows) {
    const auto got = per_shard_topk(r.k, r.s, 0.95);
    const auto ref = reference(r.k, r.s, 0.95);
    ok &= got == r.expected && ref == r.expected;
    detail += fmt("(S=%u,topK=%zu)->%zu [ref %zu] ", r.s, r.k, got, ref);
  }
  return {ok, detail};
}

Outcome criterion7() {
  std::mt19937_64 gen(777);
  double worst = 0.0;
  bool monotone = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 50 + gen() % 500, dim = 2 + gen() % 16;
    const auto data = uniform_dataset(n, dim, gen());
    std::vector<float> q(dim);
    for (auto& v : q) v = float(double(gen() % 2000) / 1000.0 - 1.0);
    const std::size_t k = 1 + gen() % 8;
    const double alpha = 0.02 + 0.46 * double(gen() % 1000) / 1000.0;
    const unsigned levels = 1 + unsigned(gen() % 8);
    const double m = 1.0 + double(gen() % 1000);

    // Naive reference: long double, sorted distances summed term by term.
    std::vector<long double> d;
    for (std::size_t i = 0; i < n; ++i) {
      long double s = 0;
      for (std::size_t j = 0; j < dim; ++j) {
        const long double x = (long double)data.row(i)[j] - q[j];
        s += x * x;
      }
      d.push_back(std::sqrt(s));
    }
    std::sort(d.begin(), d.end());
    auto naive_potential = [&](long double mm) {
      long double head = 0;
      for (std::size_t j = 0; j < k; ++j) head += d[j];
      head /= k;
      long double s = 0;
      for (std::size_t i = k; i < n; ++i) s += head / d[i];
      return s / mm;
    };
    long double bound = 0;
    for (unsigned i = 0; i <= levels; ++i) bound += naive_potential(std::pow(0.5L + alpha, i) * n);
    bound *= k == 1 ? 1.0L / (2.0L * alpha) : (long double)k / alpha;
    long double est = 0;
    for (unsigned i = 1; i <= levels; ++i) est += 1.0L / (2.0L * std::pow(0.5L + alpha, i) * n);

    auto rel = [](double a, long double b) {
      return b == 0 ? std::abs(a) : double(std::abs((long double)a - b) / std::abs(b));
    };
    worst = std::max(worst, rel(potential(q, data.view(), k, m), naive_potential(m)));
    worst = std::max(worst, rel(failure_bound(q, data.view(), k, alpha, levels), bound));
    worst = std::max(worst, rel(failure_bound_estimate(n, alpha, levels), est));

    double prev_b = -1, prev_e = -1;
    for (unsigned l = 1; l <= 10; ++l) {
      const double b = failure_bound(q, data.view(), k, alpha, l);
      const double e = failure_bound_estimate(n, alpha, l);
      monotone &= b >= prev_b && e >= prev_e;
      prev_b = b;
      prev_e = e;
    }
  }
  return {worst <= 1e-12 && monotone,
          fmt("max relative error %.3g over 50 instances (need <= 1e-12); non-decreasing in L: %s",
              worst, monotone ? "yes" : "no")};
}

Outcome criterion8() {
  ScratchDir dir("c8");
  MixtureSpec ms;
  ms.dim = 32;
  ms.latent_dim = 12;
  ms.offset = 10.0;
  ms.noise = 0.5;
  ms.seed = 8;
  const GaussianMixture mix(ms);
  const auto data = mix.sample(20'000, 1);
  const auto queries = mix.sample(200, 2, 1'000'000);

  learn_rh(sample_rows(data, 5000, kSeed), 3, 0.15, kSeed).save((dir / "rh1.json").string());
  learn_rh(sample_rows(data, 5000, kSeed), 3, 0.15, kSeed).save((dir / "rh2.json").string());
  learn_apd(sample_rows(data, 5000, kSeed), 2, 0.15).save((dir / "apd1.json").string());
  learn_apd(sample_rows(data, 5000, kSeed), 2, 0.15).save((dir / "apd2.json").string());
  const bool seg_same = file_bytes(dir / "rh1.json") == file_bytes(dir / "rh2.json") &&
                        file_bytes(dir / "apd1.json") == file_bytes(dir / "apd2.json");

  const auto segmenter = SegmenterTree::load((dir / "apd1.json").string());
  BuildOptions opt;
  opt.hnsw.seed = kSeed;
  std::optional<PartitionedIndex> first;
  for (std::size_t workers : {1u, 8u, 1u}) {
    opt.workers = workers;
    auto idx = PartitionedIndex::build(data, PartitionSpec{2, segmenter}, opt);
    idx.save((dir / ("idx-" + std::to_string(workers) + (first ? "b" : "a"))).string());
    if (!first) first.emplace(std::move(idx));
  }
  const auto a = dir_bytes(dir / "idx-1a");
  const bool idx_same = a == dir_bytes(dir / "idx-8b") && a == dir_bytes(dir / "idx-1b");

  const auto loaded = PartitionedIndex::load((dir / "idx-1a").string());
  QueryConfig cfg;
  cfg.top_k = 50;
  const auto before = batch_query(*first, queries.view(), cfg, 1);
  const auto after = batch_query(loaded, queries.view(), cfg, 4);
  const bool queries_same = before.results == after.results;
  return {seg_same && idx_same && queries_same,
          fmt("segmenter files identical: %s; index dirs identical across runs and workers "
              "{1,8}: %s (%zu files); save/load query results identical on %zu queries: %s",
              seg_same ? "yes" : "no", idx_same ? "yes" : "no", a.size(), queries.size(),
              queries_same ? "yes" : "no")};
}

Outcome criterion9() {
  MixtureSpec ms;
  ms.dim = 32;
  ms.latent_dim = 16;
  ms.offset = 10.0;
  ms.noise = 0.5;
  ms.seed = 9;
  const auto data = GaussianMixture(ms).sample(200'000, 1);
  const PartitionSpec spec{1, SegmenterTree::random(8)};
  BuildOptions opt;
  opt.hnsw.seed = kSeed;
  double secs[2];
  std::vector<std::uint8_t> bytes[2];
  for (int i = 0; i < 2; ++i) {
    opt.workers = i == 0 ? 1 : 8;
    const auto t = Clock::now();
    const auto index = PartitionedIndex::build(data, spec, opt);
    secs[i] = seconds_since(t);
    for (std::uint32_t g = 0; g < 8; ++g) {
      if (const auto* s = index.segment(0, g)) {
        const auto b = s->serialize();
        bytes[i].insert(bytes[i].end(), b.begin(), b.end());
      }
    }
    std::printf("  [build] workers=%zu %.1fs\n", opt.workers, secs[i]);
    std::fflush(stdout);
  }
  const double speedup = secs[0] / secs[1];
  return {speedup >= 3.0 && bytes[0] == bytes[1],
          fmt("workers=1 %.1fs, workers=8 %.1fs, speedup %.2fx (need >= 3x); identical "
              "segments: %s; hardware threads available: %u",
              secs[0], secs[1], speedup, bytes[0] == bytes[1] ? "yes" : "no",
              std::thread::hardware_concurrency())};
}

Outcome criterion10() {
  const auto data = uniform_dataset(10'000, 32, 1001);
  const auto queries = uniform_dataset(50, 32, 1002);
  std::vector<NeighborList> serial;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    serial.push_back(exact_topk(data.view(), queries.row(q), 100, DistanceKind::kEuclidean));
  }
  std::string detail;
  bool ok = true;
  for (std::size_t p : {1u, 3u, 7u, 64u}) {
    const auto got =
        partitioned_exact(data.view(), queries.view(), 100, DistanceKind::kEuclidean, p, 4);
    const bool same = got == serial;
    ok &= same;
    detail += fmt("P=%zu %s  ", p, same ? "equal" : "DIFFERENT");
  }
  return {ok, detail};
}

Outcome criterion11() {
  const auto& wide = config("APD(1,8)");
  const auto& narrow = config("APD(1,8)a.05");
  return {wide.recall15 > narrow.recall15,
          fmt("APD(1,8) R@15 at alpha=0.15 %.4f > at alpha=0.05 %.4f", wide.recall15,
              narrow.recall15)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "exact-routing equivalence", criterion1},
      {2, "baseline HNSW recall", criterion2},
      {3, "RS tracks baseline", criterion3},
      {4, "segmenter ordering", criterion4},
      {5, "spill-band mass", criterion5},
      {6, "perShardTopK table", criterion6},
      {7, "bound calculators", criterion7},
      {8, "determinism and persistence", criterion8},
      {9, "parallel build speedup", criterion9},
      {10, "partitioned exact search", criterion10},
      {11, "spill monotonicity", criterion11},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    try {
      selected.insert(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::fprintf(stderr, "usage: %s [criterion ...]\n", argv[0]);
      return 1;
    }
  }
  int failures = 0, ran = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    ++ran;
    const auto start = Clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failures += !out.pass;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
