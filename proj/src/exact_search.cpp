#include "shardann/exact_search.hpp"

#include <algorithm>

#include "shardann/parallel.hpp"
#include "shardann/query.hpp"

namespace shardann {

NeighborList exact_topk(const DatasetView& data, std::span<const float> query, std::size_t k,
                        DistanceKind kind) {
  if (data.empty()) throw Error("exact_topk: dataset is empty");
  if (query.size() != data.dim) {
    throw Error("exact_topk: dimension mismatch (" + std::to_string(query.size()) + " vs " +
                std::to_string(data.dim) + ")");
  }
  NeighborList all(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    all[i] = {data.ids[i], distance(query, data.row(i), kind)};
  }
  const std::size_t take = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + std::ptrdiff_t(take), all.end(), neighbor_less);
  all.resize(take);
  return all;
}

std::vector<NeighborList> partitioned_exact(const DatasetView& data, const DatasetView& queries,
                                            std::size_t k, DistanceKind kind,
                                            std::size_t partitions, std::size_t workers) {
  if (partitions == 0) throw Error("partitioned_exact: partitions must be >= 1");
  if (data.empty()) throw Error("partitioned_exact: dataset is empty");
  if (!queries.empty() && queries.dim != data.dim) {
    throw Error("partitioned_exact: dimension mismatch (" + std::to_string(queries.dim) +
                " vs " + std::to_string(data.dim) + ")");
  }
  const std::size_t n = data.size();
  const std::size_t chunks = std::min(partitions, n);
  // partial[c][q]: top-k of chunk c for query q.
  std::vector<std::vector<NeighborList>> partial(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * n / chunks;
    const std::size_t end = (c + 1) * n / chunks;
    const DatasetView chunk{data.dim, data.ids.subspan(begin, end - begin),
                            data.data.subspan(begin * data.dim, (end - begin) * data.dim)};
    partial[c].resize(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) {
      partial[c][q] = exact_topk(chunk, queries.row(q), k, kind);
    }
  });
  std::vector<NeighborList> out(queries.size());
  std::vector<NeighborList> lists(chunks);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t c = 0; c < chunks; ++c) lists[c] = std::move(partial[c][q]);
    out[q] = merge(lists, k);
  }
  return out;
}

}  // namespace shardann
