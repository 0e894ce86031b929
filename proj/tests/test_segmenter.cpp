#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "shardann/segmenter.hpp"
#include "shardann/synthetic.hpp"
#include "oracles.hpp"

using namespace shardann;

namespace {

Dataset rows(std::size_t dim, std::vector<float> flat) { return Dataset::from_rows(dim, flat); }

// Right singular vector for the second-largest singular value, from a dense SVD.
Eigen::VectorXd svd_second(const Dataset& ds) {
  Eigen::MatrixXd a(ds.size(), ds.dim());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) a(Eigen::Index(i), Eigen::Index(j)) = ds.row(i)[j];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  return svd.matrixV().col(1);
}

double angle(const std::vector<double>& h, const Eigen::VectorXd& ref) {
  double d = 0, nh = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    d += h[i] * ref(Eigen::Index(i));
    nh += h[i] * h[i];
  }
  const double c = std::abs(d) / (std::sqrt(nh) * ref.norm());
  return std::acos(std::min(1.0, c));
}

// Same projection arithmetic as routing, so points sitting exactly on lo/hi
// land on the same side.
double proj(std::span<const float> x, const std::vector<double>& h) { return shardann::dot(x, h); }

// Training rows reaching each internal node when documents descend by the
// strict "< split goes left" rule. Heap order: children of i are 2i+1, 2i+2.
std::vector<std::vector<std::size_t>> node_members(const SegmenterTree& t, const Dataset& ds) {
  std::vector<std::vector<std::size_t>> members(t.nodes().size());
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::size_t i = 0;
    while (i < t.nodes().size()) {
      members[i].push_back(r);
      const auto& n = t.nodes()[i];
      i = proj(ds.row(r), n.normal) < n.split ? 2 * i + 1 : 2 * i + 2;
    }
  }
  return members;
}

SegmenterTree single_node(double split, double lo, double hi) {
  return SegmenterTree::from_nodes(SegmenterKind::kRandomHyperplane, 2, 1, 0.15, 0,
                                   {HyperplaneNode{{1.0, 0.0}, split, lo, hi}});
}

Dataset clustered(std::size_t n, std::size_t dim, std::uint64_t seed) {
  MixtureSpec ms;
  ms.dim = dim;
  ms.latent_dim = std::min<std::size_t>(8, dim);
  ms.clusters = 16;
  ms.offset = 5.0;
  ms.noise = 0.3;
  ms.seed = seed;
  return GaussianMixture(ms).sample(n, seed + 1);
}

}  // namespace

TEST(FractileSplit, RankRulesOnTenProjections) {
  std::vector<double> p{9, 3, 0, 7, 1, 5, 8, 2, 6, 4};
  const auto s = fractile_split(p, 0.15);
  EXPECT_EQ(s.split, 5.0);
  EXPECT_EQ(s.lo, 3.0);
  EXPECT_EQ(s.hi, 6.0);
}

TEST(FractileSplit, AlphaZeroCollapsesBand) {
  const auto s = fractile_split({4, 1, 3, 2}, 0.0);
  EXPECT_EQ(s.split, 3.0);
  EXPECT_EQ(s.lo, 3.0);
  EXPECT_EQ(s.hi, 3.0);
}

TEST(FractileSplit, HiClampsToLastRank) {
  const auto s = fractile_split({0, 1}, 0.49);
  EXPECT_EQ(s.lo, 0.0);
  EXPECT_EQ(s.hi, 1.0);
  EXPECT_THROW(fractile_split({}, 0.1), Error);
}

TEST(LearnRh, ZeroLevelsIsSingleSegment) {
  const auto t = learn_rh(uniform_dataset(10, 3, 1), 0, 0.15, 1);
  EXPECT_EQ(t.num_segments(), 1u);
  EXPECT_TRUE(t.nodes().empty());
  EXPECT_EQ(t.route_document(std::vector<float>{1, 2, 3}), 0u);
  EXPECT_EQ(t.route_query(std::vector<float>{1, 2, 3}), std::vector<std::uint32_t>{0});
}

TEST(LearnRh, StructureAndUnitNormals) {
  const auto data = uniform_dataset(2000, 6, 2);
  const auto t = learn_rh(data, 3, 0.15, 99);
  EXPECT_EQ(t.kind(), SegmenterKind::kRandomHyperplane);
  EXPECT_EQ(t.num_segments(), 8u);
  ASSERT_EQ(t.nodes().size(), 7u);
  for (const auto& n : t.nodes()) {
    double s = 0;
    for (double c : n.normal) s += c * c;
    EXPECT_LE(std::abs(std::sqrt(s) - 1.0), 1e-6);
    EXPECT_LE(n.lo, n.split);
    EXPECT_LE(n.split, n.hi);
  }
}

TEST(LearnRh, Errors) {
  EXPECT_THROW(learn_rh(uniform_dataset(7, 2, 1), 2, 0.15, 1), Error);
  EXPECT_NO_THROW(learn_rh(uniform_dataset(8, 2, 1), 2, 0.15, 1));
  EXPECT_THROW(learn_rh(uniform_dataset(100, 2, 1), 2, 0.5, 1), Error);
  EXPECT_THROW(learn_rh(uniform_dataset(100, 2, 1), 2, -0.1, 1), Error);
}

TEST(LearnRh, Deterministic) {
  const auto data = uniform_dataset(500, 5, 3);
  EXPECT_EQ(learn_rh(data, 3, 0.15, 7).to_json(), learn_rh(data, 3, 0.15, 7).to_json());
  EXPECT_NE(learn_rh(data, 3, 0.15, 7).to_json(), learn_rh(data, 3, 0.15, 8).to_json());
}

TEST(SecondSingularVector, DiagonalGram) {
  const auto h = second_singular_vector(rows(2, {3, 0, -3, 0, 0, 1, 0, -1}).view());
  ASSERT_EQ(h.size(), 2u);
  EXPECT_NEAR(h[0], 0.0, 1e-6);
  EXPECT_NEAR(h[1], 1.0, 1e-6);
}

TEST(SecondSingularVector, HandEigenDecomposition) {
  const auto h = second_singular_vector(rows(2, {1, 1, 2, 2, 1, -1}).view());
  EXPECT_NEAR(h[0], 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(h[1], -1.0 / std::sqrt(2.0), 1e-6);
}

TEST(SecondSingularVector, MatchesDenseSvdOnRandomMatrix) {
  const auto ds = rows(8, oracle::random_floats(200 * 8, 123));
  const auto h = second_singular_vector(ds.view());
  EXPECT_LE(angle(h, svd_second(ds)), 1e-4);
  double s = 0;
  for (double c : h) s += c * c;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(SecondSingularVector, SignNormalized) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    // Column scales 1, 2, 4, ... keep the spectrum well separated.
    auto flat = oracle::random_floats(60 * 5, seed);
    for (std::size_t i = 0; i < flat.size(); ++i) flat[i] *= float(1 << (i % 5));
    const auto h = second_singular_vector(rows(5, flat).view());
    const auto first = std::find_if(h.begin(), h.end(), [](double c) { return std::abs(c) > 1e-5; });
    ASSERT_NE(first, h.end());
    EXPECT_GT(*first, 0.0);
  }
}

TEST(SecondSingularVector, RankOneIsDegenerate) {
  EXPECT_THROW(second_singular_vector(rows(3, {1, 2, 3, 2, 4, 6, -1, -2, -3}).view()), Error);
  EXPECT_THROW(second_singular_vector(rows(2, {1, 2}).view()), Error);
  EXPECT_THROW(second_singular_vector(rows(1, {1, 2}).view()), Error);
}

TEST(SecondSingularVector, NonConvergenceReportsResidual) {
  PowerIterationOptions opt;
  opt.max_iterations = 2;
  try {
    second_singular_vector(rows(8, oracle::random_floats(200 * 8, 5)).view(), opt);
    FAIL() << "expected non-convergence";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(LearnApd, ZeroLevelsIsSingleSegment) {
  const auto t = learn_apd(uniform_dataset(10, 3, 1), 0, 0.15);
  EXPECT_EQ(t.num_segments(), 1u);
  EXPECT_TRUE(t.nodes().empty());
}

TEST(LearnApd, TwoClustersSplitAlongSecondComponent) {
  // Wide spread along e1 dominates the top singular direction; the clusters
  // are displaced along e2 and should be separated by the root split.
  std::mt19937_64 gen(4);
  std::normal_distribution<double> wide(0.0, 20.0), narrow(0.0, 0.3);
  std::vector<float> flat;
  std::vector<int> label;
  for (int i = 0; i < 400; ++i) {
    const int c = i % 2;
    flat.push_back(float(wide(gen)));
    flat.push_back(float((c ? 4.0 : -4.0) + narrow(gen)));
    flat.push_back(float(narrow(gen)));
    label.push_back(c);
  }
  const auto ds = rows(3, flat);
  const auto oracle_h = svd_second(ds);
  ASSERT_LE(angle({0, 1, 0}, oracle_h), 0.05) << "data does not put the clusters on v2";

  const auto t = learn_apd(ds, 1, 0.15);
  EXPECT_LE(angle(t.nodes()[0].normal, oracle_h), 1e-4);
  std::set<std::uint32_t> seg_of[2];
  for (std::size_t i = 0; i < ds.size(); ++i) seg_of[label[i]].insert(t.route_document(ds.row(i)));
  EXPECT_EQ(seg_of[0].size(), 1u);
  EXPECT_EQ(seg_of[1].size(), 1u);
  EXPECT_NE(*seg_of[0].begin(), *seg_of[1].begin());
}

TEST(LearnApd, ChildNodesUseTheirOwnSubsets) {
  const auto ds = clustered(1000, 8, 5);
  const auto t = learn_apd(ds, 2, 0.15);
  const auto members = node_members(t, ds);
  for (std::size_t i = 0; i < t.nodes().size(); ++i) {
    std::vector<std::size_t> idx = members[i];
    const auto sub = ds.subset(idx);
    EXPECT_LE(angle(t.nodes()[i].normal, svd_second(sub)), 1e-4) << "node " << i;
  }
}

TEST(LearnApd, Deterministic) {
  const auto ds = clustered(600, 6, 9);
  EXPECT_EQ(learn_apd(ds, 2, 0.15), learn_apd(ds, 2, 0.15));
  EXPECT_EQ(learn_apd(ds, 2, 0.15).to_json(), learn_apd(ds, 2, 0.15).to_json());
}

TEST(Routing, DocumentRuleAtSplit) {
  const auto t = single_node(5.0, 3.0, 6.0);
  EXPECT_EQ(t.route_document(std::vector<float>{4.2f, 0}), 0u);
  EXPECT_EQ(t.route_document(std::vector<float>{5.0f, 9}), 1u);
  EXPECT_EQ(t.route_document(std::vector<float>{-1.0f, 0}), 0u);
}

TEST(Routing, QueryBand) {
  const auto t = single_node(5.0, 3.0, 6.0);
  using S = std::vector<std::uint32_t>;
  EXPECT_EQ(t.route_query(std::vector<float>{2.5f, 0}), S{0});
  EXPECT_EQ(t.route_query(std::vector<float>{4.2f, 0}), (S{0, 1}));
  EXPECT_EQ(t.route_query(std::vector<float>{3.0f, 0}), (S{0, 1}));
  EXPECT_EQ(t.route_query(std::vector<float>{6.0f, 0}), (S{0, 1}));
  EXPECT_EQ(t.route_query(std::vector<float>{6.5f, 0}), S{1});
}

TEST(Routing, AlphaZeroGivesSingleton) {
  const auto data = uniform_dataset(256, 4, 6);
  const auto t = learn_rh(data, 3, 0.0, 3);
  const auto probes = uniform_dataset(200, 4, 7);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    EXPECT_EQ(t.route_query(probes.row(i)).size(), 1u);
  }
}

TEST(Routing, SpilledDocuments) {
  const auto t = single_node(5.0, 3.0, 6.0);
  using S = std::vector<std::uint32_t>;
  EXPECT_EQ(t.route_document_spilled(std::vector<float>{1.0f, 0}), S{0});
  EXPECT_EQ(t.route_document_spilled(std::vector<float>{7.0f, 0}), S{1});
  EXPECT_EQ(t.route_document_spilled(std::vector<float>{4.0f, 0}), (S{0, 1}));
}

TEST(Routing, SpillDuplicationFactorAtRoot) {
  const auto data = uniform_dataset(10000, 8, 12);
  const auto t = learn_rh(data, 1, 0.15, 5);
  std::size_t copies = 0;
  for (std::size_t i = 0; i < data.size(); ++i) copies += t.route_document_spilled(data.row(i)).size();
  EXPECT_NEAR(double(copies) / double(data.size()), 1.3, 2.0 / double(data.size()));
}

TEST(Routing, DimensionMismatch) {
  const auto t = single_node(5.0, 3.0, 6.0);
  const std::vector<float> bad{1, 2, 3};
  EXPECT_THROW(t.route_document(bad), Error);
  EXPECT_THROW(t.route_query(bad), Error);
  EXPECT_THROW(t.route_document_spilled(bad), Error);
}

TEST(Routing, RandomKindUsesKeyAndRoutesQueriesEverywhere) {
  const auto t = SegmenterTree::random(8);
  const std::vector<float> x{1, 2};
  EXPECT_EQ(t.route_query(x), (std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(t.route_document(x, "17"), oracle::fnv1a("17seg") % 8);
  EXPECT_EQ(t.route_document_spilled(x, "17"),
            std::vector<std::uint32_t>{std::uint32_t(oracle::fnv1a("17seg") % 8)});
  EXPECT_THROW(SegmenterTree::random(0), Error);
}

TEST(SegmenterProperty, TrainingPointsSelfConsistent) {
  const auto data = clustered(4000, 10, 3);
  for (const auto& t : {learn_rh(data, 3, 0.15, 1), learn_apd(data, 3, 0.15)}) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto seg = t.route_document(data.row(i));
      const auto q = t.route_query(data.row(i));
      EXPECT_TRUE(std::binary_search(q.begin(), q.end(), seg));
      EXPECT_GE(q.size(), 1u);
      EXPECT_LE(q.size(), 8u);
    }
  }
}

TEST(SegmenterProperty, BandMassExactAtEveryNode) {
  const auto data = uniform_dataset(5000, 12, 14);
  for (double alpha : {0.05, 0.15, 0.3}) {
    const auto t = learn_rh(data, 3, alpha, 2);
    const auto members = node_members(t, data);
    for (std::size_t i = 0; i < t.nodes().size(); ++i) {
      const auto& n = t.nodes()[i];
      const double m = double(members[i].size());
      std::size_t inside = 0;
      for (std::size_t r : members[i]) {
        const double p = proj(data.row(r), n.normal);
        inside += (p >= n.lo && p <= n.hi);
      }
      const auto lo_rank = std::size_t(std::floor((0.5 - alpha) * m));
      const auto hi_rank = std::min(members[i].size() - 1, std::size_t(std::floor((0.5 + alpha) * m)));
      EXPECT_EQ(inside, hi_rank - lo_rank + 1) << "node " << i << " alpha " << alpha;
    }
  }
}

TEST(SegmenterProperty, MedianBalance) {
  const auto data = uniform_dataset(999, 7, 15);
  const auto t = learn_rh(data, 4, 0.15, 3);
  const auto members = node_members(t, data);
  for (std::size_t i = 0; i < t.nodes().size(); ++i) {
    const std::size_t l = 2 * i + 1;
    std::size_t left = 0, right = 0;
    if (l < t.nodes().size()) {
      left = members[l].size();
      right = members[l + 1].size();
    } else {
      for (std::size_t r : members[i]) {
        (proj(data.row(r), t.nodes()[i].normal) < t.nodes()[i].split ? left : right)++;
      }
    }
    EXPECT_LE(std::max(left, right) - std::min(left, right), 1u) << "node " << i;
  }
}

TEST(SegmenterFile, JsonRoundTripPreservesRouting) {
  const auto data = uniform_dataset(1000, 9, 4);
  const auto t = learn_rh(data, 4, 0.15, 11);
  const auto back = SegmenterTree::from_json(t.to_json());
  EXPECT_EQ(back, t);
  const auto probes = uniform_dataset(1000, 9, 5);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    EXPECT_EQ(back.route_query(probes.row(i)), t.route_query(probes.row(i)));
    EXPECT_EQ(back.route_document(probes.row(i)), t.route_document(probes.row(i)));
  }
}

TEST(SegmenterFile, EmptyTreeAndRandomRoundTrip) {
  const auto t0 = learn_rh(uniform_dataset(4, 2, 1), 0, 0.15, 1);
  EXPECT_EQ(SegmenterTree::from_json(t0.to_json()), t0);
  const auto r = SegmenterTree::random(5);
  EXPECT_EQ(SegmenterTree::from_json(r.to_json()), r);
}

TEST(SegmenterFile, SaveLoadIsStable) {
  TempDir dir;
  const auto t = learn_apd(clustered(500, 5, 2), 2, 0.15);
  t.save((dir / "a.json").string());
  SegmenterTree::load((dir / "a.json").string()).save((dir / "b.json").string());
  EXPECT_EQ(oracle::file_bytes(dir / "a.json"), oracle::file_bytes(dir / "b.json"));
  EXPECT_THROW(SegmenterTree::load((dir / "missing.json").string()), Error);
}

TEST(SegmenterFile, MalformedPayloads) {
  const auto t = learn_rh(uniform_dataset(100, 3, 1), 2, 0.15, 1);
  const auto good = nlohmann::json::parse(t.to_json());
  auto version = good;
  version["version"] = 2;
  EXPECT_THROW(SegmenterTree::from_json(version.dump()), Error);
  auto format = good;
  format["format"] = "something-else";
  EXPECT_THROW(SegmenterTree::from_json(format.dump()), Error);
  auto nodes = good;
  nodes["nodes"].erase(0);
  EXPECT_THROW(SegmenterTree::from_json(nodes.dump()), Error);
  auto normal = good;
  normal["nodes"][1]["h"].erase(0);
  EXPECT_THROW(SegmenterTree::from_json(normal.dump()), Error);
  auto order = good;
  order["nodes"][0]["lo"] = 1e9;
  EXPECT_THROW(SegmenterTree::from_json(order.dump()), Error);
  EXPECT_THROW(SegmenterTree::from_json("{not json"), Error);
  EXPECT_THROW(SegmenterTree::from_json("[]"), Error);
}
