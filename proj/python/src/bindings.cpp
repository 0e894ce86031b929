#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>

#include "shardann/bounds.hpp"
#include "shardann/exact_search.hpp"
#include "shardann/partitioned_index.hpp"
#include "shardann/query.hpp"
#include "shardann/segmenter.hpp"

namespace py = pybind11;
using namespace shardann;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Dataset to_dataset(const FloatArray& arr) {
  if (arr.ndim() != 2) throw Error("expected a 2-d float array");
  const auto n = static_cast<std::size_t>(arr.shape(0));
  const auto d = static_cast<std::size_t>(arr.shape(1));
  return Dataset::from_rows(d, std::vector<float>(arr.data(), arr.data() + n * d));
}

std::span<const float> to_vector(const FloatArray& arr) {
  if (arr.ndim() != 1) throw Error("expected a 1-d float array");
  return {arr.data(), static_cast<std::size_t>(arr.shape(0))};
}

// Rows padded with id -1 and distance inf when fewer than k results exist.
py::tuple to_arrays(const std::vector<NeighborList>& lists, std::size_t k) {
  py::array_t<std::int64_t> ids({lists.size(), k});
  py::array_t<double> dists({lists.size(), k});
  auto i = ids.mutable_unchecked<2>();
  auto d = dists.mutable_unchecked<2>();
  for (std::size_t r = 0; r < lists.size(); ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      const bool have = c < lists[r].size();
      i(r, c) = have ? static_cast<std::int64_t>(lists[r][c].id) : -1;
      d(r, c) = have ? lists[r][c].distance : std::numeric_limits<double>::infinity();
    }
  }
  return py::make_tuple(ids, dists);
}

QueryConfig make_config(std::size_t topk, std::size_t ef_search, double confidence, bool per_shard_topk,
                        bool f_literal) {
  QueryConfig cfg;
  cfg.top_k = topk;
  cfg.ef_search = ef_search;
  cfg.confidence = confidence;
  cfg.use_per_shard_topk = per_shard_topk;
  cfg.quantile = f_literal ? QuantileMode::kLiteral : QuantileMode::kTwoSided;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_shardann, m) {
  py::register_exception<Error>(m, "ShardannError", PyExc_ValueError);

  py::class_<SegmenterTree>(m, "Segmenter")
      .def_static("random", &SegmenterTree::random, py::arg("num_segments"))
      .def_static("from_json", [](const std::string& s) { return SegmenterTree::from_json(s); })
      .def_static("load", &SegmenterTree::load)
      .def("to_json", &SegmenterTree::to_json)
      .def("save", &SegmenterTree::save)
      .def_property_readonly("kind", [](const SegmenterTree& t) { return std::string(to_string(t.kind())); })
      .def_property_readonly("num_segments", &SegmenterTree::num_segments)
      .def("route_document", [](const SegmenterTree& t, const FloatArray& v) { return t.route_document(to_vector(v)); })
      .def("route_query", [](const SegmenterTree& t, const FloatArray& v) { return t.route_query(to_vector(v)); });

  m.def(
      "learn_segmenter",
      [](const FloatArray& sample, const std::string& strategy, std::uint32_t levels, std::uint32_t segments,
         double alpha, std::uint64_t seed) {
        const auto kind = parse_segmenter_kind(strategy);
        if (kind == SegmenterKind::kRandom) return SegmenterTree::random(segments);
        const auto data = to_dataset(sample);
        py::gil_scoped_release release;
        return kind == SegmenterKind::kRandomHyperplane ? learn_rh(data, levels, alpha, seed)
                                                        : learn_apd(data, levels, alpha);
      },
      py::arg("sample"), py::arg("strategy") = "rh", py::arg("levels") = 3, py::arg("segments") = 8,
      py::arg("alpha") = 0.15, py::arg("seed") = 42);

  py::class_<PartitionedIndex>(m, "Index")
      .def_static(
          "build",
          [](const FloatArray& data, std::uint32_t shards, const SegmenterTree* segmenter, std::uint32_t M,
             std::uint32_t ef_construction, std::size_t workers, const std::string& distance, bool physical_spill,
             std::uint64_t seed) {
            const auto ds = to_dataset(data);
            PartitionSpec spec{shards, segmenter ? *segmenter : SegmenterTree::random(1)};
            BuildOptions opt;
            opt.hnsw = HnswParams::for_m(M);
            opt.hnsw.ef_construction = ef_construction;
            opt.hnsw.seed = seed;
            opt.workers = workers;
            opt.distance = parse_distance_kind(distance);
            opt.spill = physical_spill ? SpillMode::kPhysical : SpillMode::kVirtual;
            py::gil_scoped_release release;
            return PartitionedIndex::build(ds, spec, opt);
          },
          py::arg("data"), py::arg("shards") = 1, py::arg("segmenter") = nullptr, py::arg("M") = 16,
          py::arg("ef_construction") = 200, py::arg("workers") = 1, py::arg("distance") = "euclidean",
          py::arg("physical_spill") = false, py::arg("seed") = 42)
      .def_static("load", &PartitionedIndex::load)
      .def("save", &PartitionedIndex::save)
      .def_property_readonly("num_shards", &PartitionedIndex::num_shards)
      .def_property_readonly("num_segments", &PartitionedIndex::num_segments)
      .def_property_readonly("doc_count", &PartitionedIndex::doc_count)
      .def_property_readonly("stored_count", &PartitionedIndex::stored_count)
      .def(
          "query",
          [](const PartitionedIndex& index, const FloatArray& queries, std::size_t topk, std::size_t ef_search,
             double confidence, bool per_shard_topk, bool f_literal, std::size_t workers) {
            const auto qs = to_dataset(queries);
            const auto cfg = make_config(topk, ef_search, confidence, per_shard_topk, f_literal);
            BatchResult res;
            {
              py::gil_scoped_release release;
              res = batch_query(index, qs.view(), cfg, workers);
            }
            for (const auto& e : res.errors) {
              if (!e.empty()) throw Error(e);
            }
            return to_arrays(res.results, topk);
          },
          py::arg("queries"), py::arg("topk") = 100, py::arg("ef_search") = 100, py::arg("confidence") = 0.95,
          py::arg("per_shard_topk") = true, py::arg("f_literal") = false, py::arg("workers") = 1);

  m.def(
      "exact",
      [](const FloatArray& data, const FloatArray& queries, std::size_t k, const std::string& distance,
         std::size_t partitions, std::size_t workers) {
        const auto ds = to_dataset(data);
        const auto qs = to_dataset(queries);
        std::vector<NeighborList> out;
        {
          py::gil_scoped_release release;
          out = partitioned_exact(ds.view(), qs.view(), k, parse_distance_kind(distance), partitions, workers);
        }
        return to_arrays(out, k);
      },
      py::arg("data"), py::arg("queries"), py::arg("k") = 100, py::arg("distance") = "euclidean",
      py::arg("partitions") = 1, py::arg("workers") = 1);

  m.def(
      "recall",
      [](py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> results,
         py::array_t<std::int64_t, py::array::c_style | py::array::forcecast> truth, std::size_t k) {
        if (results.ndim() != 2 || truth.ndim() != 2 || results.shape(0) != truth.shape(0)) {
          throw Error("results and truth must be 2-d with equal row counts");
        }
        const auto rows = static_cast<std::size_t>(results.shape(0));
        if (rows == 0) return 0.0;
        double total = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          std::vector<DocId> got, want;
          for (py::ssize_t c = 0; c < results.shape(1); ++c) {
            if (results.at(r, c) >= 0) got.push_back(static_cast<DocId>(results.at(r, c)));
          }
          for (py::ssize_t c = 0; c < truth.shape(1); ++c) want.push_back(static_cast<DocId>(truth.at(r, c)));
          total += recall_at_k(got, want, k);
        }
        return total / static_cast<double>(rows);
      },
      py::arg("results"), py::arg("truth"), py::arg("k"));

  m.def("probit", &probit, py::arg("p"));
  m.def(
      "per_shard_topk",
      [](std::size_t topk, std::uint32_t shards, double confidence, bool f_literal) {
        return per_shard_topk(topk, shards, confidence, f_literal ? QuantileMode::kLiteral : QuantileMode::kTwoSided);
      },
      py::arg("topk"), py::arg("shards"), py::arg("confidence") = 0.95, py::arg("f_literal") = false);
  m.def("failure_bound_estimate", &failure_bound_estimate, py::arg("n"), py::arg("alpha"), py::arg("levels"));
  m.def("shard_of", [](const std::string& key, std::uint32_t s) { return shard_of(key, s); }, py::arg("key"),
        py::arg("shards"));
}
