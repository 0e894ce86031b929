// shardann: command-line driver for segmenter learning, partitioned index
// builds, querying, brute-force ground truth, and recall evaluation.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "shardann/exact_search.hpp"
#include "shardann/io.hpp"
#include "shardann/partitioned_index.hpp"
#include "shardann/query.hpp"
#include "shardann/segmenter.hpp"
#include "shardann/synthetic.hpp"

namespace {

using Clock = std::chrono::steady_clock;
using shardann::Error;

constexpr std::uint64_t kDefaultSeed = 42;
const std::vector<std::size_t> kDefaultRecallKs{1, 5, 10, 15, 50, 100};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

// Rows padded to `width` with id -1 and distance +inf.
void write_results(const std::vector<shardann::NeighborList>& results, std::size_t width,
                   const std::string& ids_path, const std::string& dist_path) {
  std::vector<std::vector<std::int32_t>> ids(results.size(),
                                             std::vector<std::int32_t>(width, -1));
  std::vector<std::vector<float>> dists(
      results.size(), std::vector<float>(width, std::numeric_limits<float>::infinity()));
  for (std::size_t q = 0; q < results.size(); ++q) {
    for (std::size_t i = 0; i < results[q].size() && i < width; ++i) {
      if (results[q][i].id > std::uint64_t(std::numeric_limits<std::int32_t>::max())) {
        throw Error("docId does not fit the ivecs int32 payload");
      }
      ids[q][i] = static_cast<std::int32_t>(results[q][i].id);
      dists[q][i] = static_cast<float>(results[q][i].distance);
    }
  }
  shardann::save_ivecs(ids, ids_path);
  if (!dist_path.empty()) shardann::save_fvecs_rows(dists, dist_path);
}

struct RecallRow {
  std::size_t k;
  double recall;
};

std::vector<RecallRow> evaluate_recall(const std::vector<std::vector<std::int32_t>>& results,
                                       const std::vector<std::vector<std::int32_t>>& truth,
                                       const std::vector<std::size_t>& ks) {
  if (results.size() != truth.size()) {
    throw Error("row count mismatch: results have " + std::to_string(results.size()) +
                " rows, truth has " + std::to_string(truth.size()));
  }
  std::vector<RecallRow> rows;
  for (std::size_t k : ks) {
    if (k == 0) throw Error("k must be positive");
    double sum = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
      if (results[q].size() < k) {
        throw Error("k=" + std::to_string(k) + " exceeds result width " +
                    std::to_string(results[q].size()));
      }
      if (truth[q].size() < k) {
        throw Error("k=" + std::to_string(k) + " exceeds truth width " +
                    std::to_string(truth[q].size()));
      }
      std::vector<shardann::DocId> r, t;
      for (auto v : results[q]) r.push_back(static_cast<shardann::DocId>(static_cast<std::int64_t>(v)));
      for (auto v : truth[q]) t.push_back(static_cast<shardann::DocId>(static_cast<std::int64_t>(v)));
      sum += shardann::recall_at_k(r, t, k);
    }
    rows.push_back({k, results.empty() ? 0.0 : sum / double(results.size())});
  }
  return rows;
}

shardann::SegmenterTree learn(const shardann::Dataset& data, const std::string& strategy,
                           std::uint32_t levels, std::uint32_t segments, double alpha,
                           std::size_t sample_size, std::uint64_t seed) {
  const auto kind = shardann::parse_segmenter_kind(strategy);
  if (kind == shardann::SegmenterKind::kRandom) return shardann::SegmenterTree::random(segments);
  const auto sample = shardann::sample_rows(data, sample_size, seed);
  return kind == shardann::SegmenterKind::kApd ? shardann::learn_apd(sample, levels, alpha)
                                            : shardann::learn_rh(sample, levels, alpha, seed);
}

shardann::Dataset load_input(const std::string& path) {
  auto data = shardann::load_fvecs(path);
  return data;
}

// ---------------------------------------------------------------------------

struct LearnArgs {
  std::string input, out, strategy = "rh";
  std::uint32_t levels = 3, segments = 8;
  double alpha = 0.15;
  std::size_t sample_size = 250000;
  std::uint64_t seed = kDefaultSeed;
};

int run_learn(const LearnArgs& a) {
  auto t = Clock::now();
  const auto data = load_input(a.input);
  const double load = seconds_since(t);
  t = Clock::now();
  const auto tree = learn(data, a.strategy, a.levels, a.segments, a.alpha, a.sample_size, a.seed);
  const double learn_s = seconds_since(t);
  tree.save(a.out);
  std::printf("segmenter %s: %u segments, learned in %.3fs (load %.3fs) -> %s\n",
              std::string(shardann::to_string(tree.kind())).c_str(), tree.num_segments(), learn_s,
              load, a.out.c_str());
  return 0;
}

struct BuildArgs {
  std::string input, out, segmenter, distance = "euclidean", spill = "virtual";
  std::uint32_t shards = 1, M = 16, ef_construction = 200, ef_search = 100;
  std::size_t workers = 1;
  std::uint64_t seed = kDefaultSeed;
};

int run_build(const BuildArgs& a) {
  shardann::PartitionSpec spec;
  spec.num_shards = a.shards;
  if (!a.segmenter.empty()) spec.segmenter = shardann::SegmenterTree::load(a.segmenter);
  auto t = Clock::now();
  const auto data = load_input(a.input);
  const double load = seconds_since(t);

  shardann::BuildOptions opt;
  opt.hnsw = shardann::HnswParams::for_m(a.M);
  opt.hnsw.ef_construction = a.ef_construction;
  opt.hnsw.ef_search = a.ef_search;
  opt.hnsw.seed = a.seed;
  opt.distance = shardann::parse_distance_kind(a.distance);
  opt.workers = a.workers;
  opt.spill = shardann::parse_spill_mode(a.spill);

  t = Clock::now();
  const auto index = shardann::PartitionedIndex::build(data, spec, opt);
  const double build = seconds_since(t);
  index.save(a.out);
  std::printf("built (%u,%u)-partitioned index of %zu docs in %.3fs with %zu workers "
              "(load %.3fs) -> %s\n",
              index.num_shards(), index.num_segments(), index.doc_count(), build, a.workers,
              load, a.out.c_str());
  return 0;
}

struct QueryArgs {
  std::string index, queries, out, distances_out, timing_out, per_shard = "on";
  std::size_t topk = 100, ef_search = 100, workers = 1;
  double confidence = 0.95;
  bool f_literal = false;
};

int run_query(const QueryArgs& a) {
  auto t = Clock::now();
  const auto index = shardann::PartitionedIndex::load(a.index);
  const auto queries = load_input(a.queries);
  const double load = seconds_since(t);

  shardann::QueryConfig cfg;
  cfg.top_k = a.topk;
  cfg.ef_search = a.ef_search;
  cfg.confidence = a.confidence;
  cfg.use_per_shard_topk = a.per_shard == "on";
  cfg.quantile = a.f_literal ? shardann::QuantileMode::kLiteral : shardann::QuantileMode::kTwoSided;
  const auto result = shardann::batch_query(index, queries.view(), cfg, a.workers);

  write_results(result.results, a.topk, a.out, a.distances_out);
  auto report = nlohmann::ordered_json::parse(result.report.to_json());
  report["loadSeconds"] = load;
  if (!a.timing_out.empty()) write_text(a.timing_out, report.dump(2) + "\n");
  for (std::size_t i = 0; i < result.errors.size(); ++i) {
    if (!result.errors[i].empty()) std::fprintf(stderr, "query %zu: %s\n", i, result.errors[i].c_str());
  }
  std::printf("%zu queries in %.3fs (%.1f QPS, p50 %.3fms, p99 %.3fms, load %.3fs)\n",
              result.report.count, result.report.wall_seconds, result.report.qps,
              result.report.latency_ms_p50, result.report.latency_ms_p99, load);
  return result.report.failures == 0 ? 0 : 2;
}

struct ExactArgs {
  std::string input, queries, out, distances_out, distance = "euclidean";
  std::size_t k = 100, partitions = 1, workers = 1;
};

int run_exact(const ExactArgs& a) {
  auto t = Clock::now();
  const auto data = load_input(a.input);
  const auto queries = load_input(a.queries);
  const double load = seconds_since(t);
  t = Clock::now();
  const auto truth = shardann::partitioned_exact(data.view(), queries.view(), a.k,
                                              shardann::parse_distance_kind(a.distance),
                                              a.partitions, a.workers);
  const double scan = seconds_since(t);
  write_results(truth, std::min(a.k, data.size()), a.out, a.distances_out);
  std::printf("ground truth for %zu queries (k=%zu) in %.3fs (load %.3fs) -> %s\n",
              queries.size(), a.k, scan, load, a.out.c_str());
  return 0;
}

struct EvaluateArgs {
  std::string results, truth, json_out;
  std::vector<std::size_t> ks = kDefaultRecallKs;
};

std::string recall_json(const std::vector<RecallRow>& rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : rows) j["R@" + std::to_string(r.k)] = r.recall;
  return j.dump();
}

int run_evaluate(const EvaluateArgs& a) {
  const auto results = shardann::load_ivecs(a.results);
  const auto truth = shardann::load_ivecs(a.truth);
  const auto rows = evaluate_recall(results, truth, a.ks);
  std::printf("%8s  %8s\n", "k", "recall");
  for (const auto& r : rows) std::printf("%8zu  %8.4f\n", r.k, r.recall);
  const auto json = recall_json(rows);
  std::printf("%s\n", json.c_str());
  if (!a.json_out.empty()) write_text(a.json_out, json + "\n");
  return 0;
}

struct BenchArgs {
  std::string input, queries, json_out, distance = "euclidean";
  std::vector<std::string> strategies{"hnsw", "rs", "rh", "apd"};
  std::size_t synthetic = 0, synthetic_queries = 1000, synthetic_dim = 128;
  std::uint32_t shards = 1, levels = 3, M = 16, ef_construction = 200;
  std::size_t topk = 100, ef_search = 200, workers = 1, sample_size = 250000;
  double alpha = 0.15, confidence = 0.95;
  std::vector<std::size_t> ks = kDefaultRecallKs;
  std::uint64_t seed = kDefaultSeed;
};

int run_bench(const BenchArgs& a) {
  shardann::Dataset data, queries;
  if (a.synthetic > 0) {
    shardann::MixtureSpec ms;
    ms.dim = a.synthetic_dim;
    ms.latent_dim = std::min<std::size_t>(32, a.synthetic_dim);
    ms.offset = 20.0;
    ms.noise = 0.5;
    ms.seed = a.seed;
    const shardann::GaussianMixture mix(ms);
    data = mix.sample(a.synthetic, 1);
    queries = mix.sample(a.synthetic_queries, 2, 1u << 30);
  } else {
    if (a.input.empty() || a.queries.empty()) {
      throw Error("bench needs --input and --queries, or --synthetic N");
    }
    data = load_input(a.input);
    queries = load_input(a.queries);
  }
  std::size_t max_k = a.topk;
  for (std::size_t k : a.ks) {
    if (k > a.topk) throw Error("recall k=" + std::to_string(k) + " exceeds --topk");
  }
  const auto kind = shardann::parse_distance_kind(a.distance);
  auto t = Clock::now();
  const auto truth =
      shardann::partitioned_exact(data.view(), queries.view(), max_k, kind, 1, a.workers);
  std::printf("ground truth: %zu queries over %zu docs in %.2fs\n", queries.size(), data.size(),
              seconds_since(t));

  nlohmann::ordered_json report = nlohmann::ordered_json::array();
  std::printf("%-12s %9s %9s %9s", "method", "learn_s", "build_s", "query_s");
  for (std::size_t k : a.ks) std::printf(" %8s", ("R@" + std::to_string(k)).c_str());
  std::printf("\n");
  for (const auto& name : a.strategies) {
    shardann::PartitionSpec spec;
    std::string label;
    t = Clock::now();
    if (name == "hnsw") {
      spec.num_shards = 1;
      spec.segmenter = shardann::SegmenterTree::random(1);
      label = "HNSW";
    } else {
      spec.num_shards = a.shards;
      spec.segmenter = learn(data, name, a.levels, 1u << a.levels, a.alpha, a.sample_size, a.seed);
      std::string upper = name;
      for (auto& c : upper) c = char(std::toupper(static_cast<unsigned char>(c)));
      label = upper + "(" + std::to_string(a.shards) + "," +
              std::to_string(spec.segmenter.num_segments()) + ")";
    }
    const double learn_s = seconds_since(t);

    shardann::BuildOptions opt;
    opt.hnsw = shardann::HnswParams::for_m(a.M);
    opt.hnsw.ef_construction = a.ef_construction;
    opt.hnsw.seed = a.seed;
    opt.distance = kind;
    opt.workers = a.workers;
    t = Clock::now();
    const auto index = shardann::PartitionedIndex::build(data, spec, opt);
    const double build_s = seconds_since(t);

    shardann::QueryConfig cfg;
    cfg.top_k = a.topk;
    cfg.ef_search = a.ef_search;
    cfg.confidence = a.confidence;
    const auto res = shardann::batch_query(index, queries.view(), cfg, a.workers);

    nlohmann::ordered_json row;
    row["method"] = label;
    row["learnSeconds"] = learn_s;
    row["buildSeconds"] = build_s;
    row["query"] = nlohmann::ordered_json::parse(res.report.to_json());
    std::printf("%-12s %9.2f %9.2f %9.2f", label.c_str(), learn_s, build_s,
                res.report.wall_seconds);
    for (std::size_t k : a.ks) {
      double sum = 0.0;
      for (std::size_t q = 0; q < queries.size(); ++q) {
        sum += shardann::recall_at_k(res.results[q], truth[q], k);
      }
      const double r = queries.empty() ? 0.0 : sum / double(queries.size());
      row["R@" + std::to_string(k)] = r;
      std::printf(" %8.4f", r);
    }
    std::printf("\n");
    std::fflush(stdout);
    report.push_back(std::move(row));
  }
  if (!a.json_out.empty()) write_text(a.json_out, report.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shardann: partitioned HNSW approximate nearest neighbor search"};
  app.require_subcommand(1);

  const std::map<std::string, std::string> on_off{{"on", "on"}, {"off", "off"}};
  const auto distances = CLI::IsMember({"euclidean", "cosine"});

  LearnArgs learn_args;
  auto* learn_cmd = app.add_subcommand("learn-segmenter", "Learn an RS/RH/APD segmenter");
  learn_cmd->add_option("--input", learn_args.input, "Dataset (fvecs)")->required();
  learn_cmd->add_option("--out", learn_args.out, "Segmenter file (JSON)")->required();
  learn_cmd->add_option("--strategy", learn_args.strategy, "rs, rh or apd")
      ->check(CLI::IsMember({"rs", "rh", "apd"}));
  learn_cmd->add_option("--levels", learn_args.levels, "Tree depth (rh/apd)");
  learn_cmd->add_option("--segments", learn_args.segments, "Segment count (rs)");
  learn_cmd->add_option("--alpha", learn_args.alpha, "Spill half-width in fractiles");
  learn_cmd->add_option("--sample-size", learn_args.sample_size, "Training subsample size");
  learn_cmd->add_option("--seed", learn_args.seed, "Random seed (default 42)");

  BuildArgs build_args;
  auto* build_cmd = app.add_subcommand("build", "Build a partitioned index");
  build_cmd->add_option("--input", build_args.input, "Dataset (fvecs)")->required();
  build_cmd->add_option("--out", build_args.out, "Index directory")->required();
  build_cmd->add_option("--segmenter", build_args.segmenter,
                        "Segmenter file; omitted means one segment per shard");
  build_cmd->add_option("--shards", build_args.shards, "Shard count");
  build_cmd->add_option("--M", build_args.M, "HNSW max degree");
  build_cmd->add_option("--ef-construction", build_args.ef_construction, "HNSW build beam");
  build_cmd->add_option("--ef-search", build_args.ef_search, "Default search beam stored");
  build_cmd->add_option("--workers", build_args.workers, "Parallel segment builds");
  build_cmd->add_option("--spill", build_args.spill, "virtual or physical")
      ->check(CLI::IsMember({"virtual", "physical"}));
  build_cmd->add_option("--distance", build_args.distance)->check(distances);
  build_cmd->add_option("--seed", build_args.seed, "HNSW seed (default 42)");

  QueryArgs query_args;
  auto* query_cmd = app.add_subcommand("query", "Query a partitioned index");
  query_cmd->add_option("--index", query_args.index, "Index directory")->required();
  query_cmd->add_option("--queries", query_args.queries, "Queries (fvecs)")->required();
  query_cmd->add_option("--out", query_args.out, "Result ids (ivecs)")->required();
  query_cmd->add_option("--distances-out", query_args.distances_out, "Result distances (fvecs)");
  query_cmd->add_option("--timing-out", query_args.timing_out, "Timing report (JSON)");
  query_cmd->add_option("--topk", query_args.topk);
  query_cmd->add_option("--ef-search", query_args.ef_search);
  query_cmd->add_option("--confidence", query_args.confidence, "topK confidence p");
  query_cmd->add_option("--per-shard-topk", query_args.per_shard)->transform(
      CLI::IsMember(on_off));
  query_cmd->add_flag("--f-literal", query_args.f_literal,
                      "Use f(p) = probit(1 - p/2) for perShardTopK");
  query_cmd->add_option("--workers", query_args.workers);

  ExactArgs exact_args;
  auto* exact_cmd = app.add_subcommand("exact", "Brute-force ground truth");
  exact_cmd->add_option("--input", exact_args.input, "Dataset (fvecs)")->required();
  exact_cmd->add_option("--queries", exact_args.queries, "Queries (fvecs)")->required();
  exact_cmd->add_option("--out", exact_args.out, "Ground-truth ids (ivecs)")->required();
  exact_cmd->add_option("--distances-out", exact_args.distances_out, "Distances (fvecs)");
  exact_cmd->add_option("--k", exact_args.k);
  exact_cmd->add_option("--partitions", exact_args.partitions, "Data chunks scanned");
  exact_cmd->add_option("--workers", exact_args.workers);
  exact_cmd->add_option("--distance", exact_args.distance)->check(distances);

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Recall of results against ground truth");
  eval_cmd->add_option("--results", eval_args.results, "Result ids (ivecs)")->required();
  eval_cmd->add_option("--truth", eval_args.truth, "Ground-truth ids (ivecs)")->required();
  eval_cmd->add_option("--k", eval_args.ks, "Recall cutoffs")->delimiter(',');
  eval_cmd->add_option("--json-out", eval_args.json_out);

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Learn, build, query and score several methods");
  bench_cmd->add_option("--input", bench_args.input, "Dataset (fvecs)");
  bench_cmd->add_option("--queries", bench_args.queries, "Queries (fvecs)");
  bench_cmd->add_option("--synthetic", bench_args.synthetic,
                        "Generate N clustered vectors instead of --input");
  bench_cmd->add_option("--synthetic-queries", bench_args.synthetic_queries);
  bench_cmd->add_option("--dim", bench_args.synthetic_dim, "Synthetic dimension");
  bench_cmd->add_option("--strategies", bench_args.strategies, "hnsw,rs,rh,apd")
      ->delimiter(',')
      ->check(CLI::IsMember({"hnsw", "rs", "rh", "apd"}));
  bench_cmd->add_option("--shards", bench_args.shards);
  bench_cmd->add_option("--levels", bench_args.levels, "Segments per shard = 2^levels");
  bench_cmd->add_option("--alpha", bench_args.alpha);
  bench_cmd->add_option("--M", bench_args.M);
  bench_cmd->add_option("--ef-construction", bench_args.ef_construction);
  bench_cmd->add_option("--ef-search", bench_args.ef_search);
  bench_cmd->add_option("--topk", bench_args.topk);
  bench_cmd->add_option("--confidence", bench_args.confidence);
  bench_cmd->add_option("--k", bench_args.ks)->delimiter(',');
  bench_cmd->add_option("--sample-size", bench_args.sample_size);
  bench_cmd->add_option("--workers", bench_args.workers);
  bench_cmd->add_option("--distance", bench_args.distance)->check(distances);
  bench_cmd->add_option("--seed", bench_args.seed);
  bench_cmd->add_option("--json-out", bench_args.json_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*learn_cmd) return run_learn(learn_args);
    if (*build_cmd) return run_build(build_args);
    if (*query_cmd) return run_query(query_args);
    if (*exact_cmd) return run_exact(exact_args);
    if (*eval_cmd) return run_evaluate(eval_args);
    if (*bench_cmd) return run_bench(bench_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
