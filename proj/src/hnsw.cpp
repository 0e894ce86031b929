#include "shardann/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "shardann/detail/binary.hpp"

namespace shardann {

namespace {

constexpr char kMagic[] = "HNSW";
constexpr std::uint16_t kVersion = 1;

// Epoch-tagged visited set, one per thread, reused across searches and indices.
class VisitedSet {
 public:
  static VisitedSet& local(std::size_t n) {
    thread_local VisitedSet set;
    set.reset(n);
    return set;
  }
  bool insert(std::uint32_t node) {
    if (tags_[node] == epoch_) return false;
    tags_[node] = epoch_;
    return true;
  }

 private:
  void reset(std::size_t n) {
    if (tags_.size() < n) tags_.resize(n, 0);
    if (++epoch_ == 0) {
      std::fill(tags_.begin(), tags_.end(), 0);
      epoch_ = 1;
    }
  }
  std::vector<std::uint32_t> tags_;
  std::uint32_t epoch_ = 0;
};

}  // namespace

HnswParams HnswParams::for_m(std::uint32_t m) {
  HnswParams p;
  p.M = m;
  p.M0 = 2 * m;
  p.level_mult = m >= 2 ? 1.0 / std::log(double(m)) : 0.0;
  return p;
}

void HnswParams::validate() const {
  if (M < 2) throw Error("HNSW: M must be >= 2");
  if (M0 < M) throw Error("HNSW: M0 must be >= M");
  if (ef_construction < M) throw Error("HNSW: efConstruction must be >= M");
  if (ef_search < 1) throw Error("HNSW: efSearch must be >= 1");
  if (!(level_mult >= 0.0) || !std::isfinite(level_mult)) {
    throw Error("HNSW: level normalization must be finite and non-negative");
  }
}

std::uint32_t level_for_uniform(double u, double level_mult) {
  if (!(u > 0.0 && u <= 1.0)) throw Error("level draw must lie in (0, 1]");
  return static_cast<std::uint32_t>(std::floor(-std::log(u) * level_mult));
}

HnswIndex::HnswIndex(std::size_t dim, DistanceKind kind, HnswParams params)
    : dim_(dim), kind_(kind), params_(params), rng_(params.seed) {
  if (dim == 0) throw Error("HNSW: dimension must be positive");
  params_.validate();
  if (params_.level_mult == 0.0) params_.level_mult = 1.0 / std::log(double(params_.M));
}

HnswIndex HnswIndex::build(const Dataset& data, DistanceKind kind, HnswParams params) {
  HnswIndex index(data.dim(), kind, params);
  for (std::size_t i = 0; i < data.size(); ++i) index.insert(data.id(i), data.row(i));
  return index;
}

std::uint32_t HnswIndex::assign_level() {
  return level_for_uniform(rng_.uniform_open_closed(), params_.level_mult);
}

std::optional<DocId> HnswIndex::entry_point() const {
  if (empty()) return std::nullopt;
  return ids_[entry_];
}

std::uint32_t HnswIndex::level_of(DocId id) const {
  auto it = index_of_.find(id);
  if (it == index_of_.end()) throw Error("unknown docId " + std::to_string(id));
  return levels_[it->second];
}

std::vector<DocId> HnswIndex::neighbors(DocId id, std::uint32_t layer) const {
  auto it = index_of_.find(id);
  if (it == index_of_.end()) throw Error("unknown docId " + std::to_string(id));
  if (layer > levels_[it->second]) return {};
  std::vector<DocId> out;
  for (std::uint32_t n : links(it->second, layer)) out.push_back(ids_[n]);
  return out;
}

std::span<std::uint32_t> HnswIndex::links(std::uint32_t node, std::uint32_t layer) {
  std::uint32_t* slot = layer == 0
                            ? &base_links_[std::size_t(node) * (params_.M0 + 1)]
                            : &upper_links_[node][std::size_t(layer - 1) * (params_.M + 1)];
  return {slot + 1, slot[0]};
}

std::span<const std::uint32_t> HnswIndex::links(std::uint32_t node, std::uint32_t layer) const {
  const std::uint32_t* slot =
      layer == 0 ? &base_links_[std::size_t(node) * (params_.M0 + 1)]
                 : &upper_links_[node][std::size_t(layer - 1) * (params_.M + 1)];
  return {slot + 1, slot[0]};
}

void HnswIndex::set_links(std::uint32_t node, std::uint32_t layer,
                          std::span<const std::uint32_t> to) {
  std::uint32_t* slot = layer == 0
                            ? &base_links_[std::size_t(node) * (params_.M0 + 1)]
                            : &upper_links_[node][std::size_t(layer - 1) * (params_.M + 1)];
  slot[0] = static_cast<std::uint32_t>(to.size());
  std::copy(to.begin(), to.end(), slot + 1);
}

std::uint32_t HnswIndex::add_node(DocId id, std::span<const float> vector, std::uint32_t level) {
  const auto node = static_cast<std::uint32_t>(ids_.size());
  ids_.push_back(id);
  data_.insert(data_.end(), vector.begin(), vector.end());
  levels_.push_back(level);
  base_links_.resize(base_links_.size() + params_.M0 + 1, 0);
  upper_links_.emplace_back(std::size_t(level) * (params_.M + 1), 0);
  index_of_.emplace(id, node);
  return node;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(std::span<const float> q,
                                                          std::vector<Candidate> entry,
                                                          std::size_t ef,
                                                          std::uint32_t layer) const {
  auto& visited = VisitedSet::local(ids_.size());
  std::priority_queue<Candidate, std::vector<Candidate>, Farther> frontier;
  std::priority_queue<Candidate, std::vector<Candidate>, Closer> best;
  for (const auto& c : entry) {
    if (!visited.insert(c.node)) continue;
    frontier.push(c);
    best.push(c);
    if (best.size() > ef) best.pop();
  }
  while (!frontier.empty()) {
    const Candidate current = frontier.top();
    if (best.size() >= ef && Closer{}(best.top(), current)) break;
    frontier.pop();
    for (std::uint32_t next : links(current.node, layer)) {
      if (!visited.insert(next)) continue;
      const Candidate c{dist(q, next), next, ids_[next]};
      if (best.size() < ef || Closer{}(c, best.top())) {
        frontier.push(c);
        best.push(c);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Candidate> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// Heuristic selection: keep a candidate only if it is closer to the base point
// than to every neighbor already kept; then top up with the nearest pruned ones.
std::vector<std::uint32_t> HnswIndex::select_neighbors(std::vector<Candidate> sorted,
                                                       std::size_t m) const {
  std::vector<std::uint32_t> kept;
  std::vector<std::uint32_t> pruned;
  kept.reserve(m);
  for (const auto& c : sorted) {
    if (kept.size() >= m) break;
    bool diverse = true;
    for (std::uint32_t r : kept) {
      if (!(c.dist < distance(vec(c.node), vec(r), kind_))) {
        diverse = false;
        break;
      }
    }
    (diverse ? kept : pruned).push_back(c.node);
  }
  for (std::size_t i = 0; i < pruned.size() && kept.size() < m; ++i) kept.push_back(pruned[i]);
  return kept;
}

void HnswIndex::connect(std::uint32_t from, std::uint32_t to, std::uint32_t layer) {
  auto current = links(from, layer);
  const std::uint32_t cap = capacity(layer);
  if (current.size() < cap) {
    std::uint32_t* slot = current.data() - 1;
    slot[1 + slot[0]] = to;
    ++slot[0];
    return;
  }
  std::vector<Candidate> cands;
  cands.reserve(current.size() + 1);
  const auto base = vec(from);
  for (std::uint32_t n : current) cands.push_back({distance(base, vec(n), kind_), n, ids_[n]});
  cands.push_back({distance(base, vec(to), kind_), to, ids_[to]});
  std::sort(cands.begin(), cands.end(), Closer{});
  const auto chosen = select_neighbors(std::move(cands), cap);
  set_links(from, layer, chosen);
}

void HnswIndex::insert(DocId id, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw Error("HNSW insert: dimension mismatch (" + std::to_string(vector.size()) + " vs " +
                std::to_string(dim_) + ")");
  }
  if (index_of_.contains(id)) throw Error("HNSW insert: duplicate docId " + std::to_string(id));
  check_finite(vector);
  if (kind_ == DistanceKind::kCosine &&
      std::all_of(vector.begin(), vector.end(), [](float v) { return v == 0.0f; })) {
    throw Error("HNSW insert: zero-norm vector under cosine distance");
  }

  const std::uint32_t level = assign_level();
  const bool first = ids_.empty();
  const std::uint32_t node = add_node(id, vector, level);
  if (first) {
    entry_ = node;
    max_level_ = level;
    return;
  }

  const auto q = vec(node);
  std::vector<Candidate> entry{{dist(q, entry_), entry_, ids_[entry_]}};
  for (std::uint32_t layer = max_level_; layer > level; --layer) {
    auto w = search_layer(q, entry, 1, layer);
    entry.assign(1, w.front());
  }
  for (std::uint32_t layer = std::min(level, max_level_) + 1; layer-- > 0;) {
    auto w = search_layer(q, entry, params_.ef_construction, layer);
    const auto chosen = select_neighbors(w, params_.M);
    set_links(node, layer, chosen);
    for (std::uint32_t n : chosen) connect(n, node, layer);
    entry = std::move(w);
  }
  if (level > max_level_) {
    max_level_ = level;
    entry_ = node;
  }
}

NeighborList HnswIndex::search(std::span<const float> query, std::size_t n,
                               std::size_t ef) const {
  if (ef < n) throw Error("HNSW search: ef must be >= N");
  if (query.size() != dim_) {
    throw Error("HNSW search: dimension mismatch (" + std::to_string(query.size()) + " vs " +
                std::to_string(dim_) + ")");
  }
  if (empty() || n == 0) return {};
  std::vector<Candidate> entry{{dist(query, entry_), entry_, ids_[entry_]}};
  for (std::uint32_t layer = max_level_; layer > 0; --layer) {
    auto w = search_layer(query, entry, 1, layer);
    entry.assign(1, w.front());
  }
  const auto w = search_layer(query, std::move(entry), ef, 0);
  NeighborList out;
  out.reserve(std::min(n, w.size()));
  for (std::size_t i = 0; i < w.size() && i < n; ++i) out.push_back({w[i].id, w[i].dist});
  return out;
}

NeighborList HnswIndex::search(std::span<const float> query, std::size_t n) const {
  return search(query, n, std::max<std::size_t>(params_.ef_search, n));
}

std::vector<std::string> HnswIndex::validate() const {
  std::vector<std::string> problems;
  auto report = [&](std::string msg) { problems.push_back(std::move(msg)); };
  if (empty()) return problems;
  if (levels_[entry_] != max_level_) report("entry point is not on the top layer");
  for (std::uint32_t node = 0; node < ids_.size(); ++node) {
    if (levels_[node] > max_level_) report("node above max level: " + std::to_string(ids_[node]));
    for (std::uint32_t layer = 0; layer <= levels_[node]; ++layer) {
      const auto adj = links(node, layer);
      if (adj.size() > capacity(layer)) {
        report("degree over capacity at node " + std::to_string(ids_[node]) + " layer " +
               std::to_string(layer));
      }
      std::vector<std::uint32_t> sorted(adj.begin(), adj.end());
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        report("duplicate edge at node " + std::to_string(ids_[node]));
      }
      for (std::uint32_t n : adj) {
        if (n >= ids_.size()) {
          report("dangling edge at node " + std::to_string(ids_[node]));
        } else if (n == node) {
          report("self edge at node " + std::to_string(ids_[node]));
        } else if (levels_[n] < layer) {
          report("edge to node absent from layer " + std::to_string(layer));
        }
      }
    }
  }
  return problems;
}

std::vector<std::uint8_t> HnswIndex::serialize() const {
  detail::ByteWriter out;
  out.bytes(std::string_view(kMagic, 4));
  out.u16(kVersion);
  out.u8(static_cast<std::uint8_t>(kind_));
  out.u32(static_cast<std::uint32_t>(dim_));
  out.u64(ids_.size());
  out.u32(params_.M);
  out.u32(params_.M0);
  out.u32(params_.ef_construction);
  out.u32(params_.ef_search);
  out.f64(params_.level_mult);
  out.u64(params_.seed);
  out.u64(empty() ? 0 : ids_[entry_]);
  out.u32(max_level_);
  for (std::uint32_t node = 0; node < ids_.size(); ++node) {
    out.u64(ids_[node]);
    out.u32(levels_[node]);
    for (std::uint32_t layer = 0; layer <= levels_[node]; ++layer) {
      const auto adj = links(node, layer);
      out.u32(static_cast<std::uint32_t>(adj.size()));
      for (std::uint32_t n : adj) out.u64(ids_[n]);
    }
  }
  for (float v : data_) out.f32(v);
  return out.take();
}

HnswIndex HnswIndex::deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  if (in.bytes(4) != std::string_view(kMagic, 4)) throw Error("segment: bad magic");
  if (const auto v = in.u16(); v != kVersion) {
    throw Error("segment: unsupported version " + std::to_string(v));
  }
  const auto kind_byte = in.u8();
  if (kind_byte > 1) throw Error("segment: unknown distance kind");
  const std::size_t dim = in.u32();
  const std::uint64_t count = in.u64();
  HnswParams p;
  p.M = in.u32();
  p.M0 = in.u32();
  p.ef_construction = in.u32();
  p.ef_search = in.u32();
  p.level_mult = in.f64();
  p.seed = in.u64();
  HnswIndex index(dim, static_cast<DistanceKind>(kind_byte), p);
  const DocId entry_id = in.u64();
  const std::uint32_t max_level = in.u32();

  if (count > in.remaining() / 16) throw Error("segment: node count exceeds payload");
  // Neighbor ids may refer forward, so adjacency is resolved after all nodes are read.
  std::vector<std::vector<std::vector<DocId>>> raw(count);
  const std::vector<float> zeros(dim, 0.0f);
  for (std::uint64_t i = 0; i < count; ++i) {
    const DocId id = in.u64();
    const std::uint32_t level = in.u32();
    if (level > max_level) throw Error("segment: node level exceeds max level");
    if (index.index_of_.contains(id)) throw Error("segment: duplicate docId");
    index.add_node(id, zeros, level);
    raw[i].resize(level + 1);
    for (std::uint32_t layer = 0; layer <= level; ++layer) {
      const std::uint32_t degree = in.u32();
      if (degree > index.capacity(layer)) throw Error("segment: degree over capacity");
      raw[i][layer].resize(degree);
      for (auto& n : raw[i][layer]) n = in.u64();
    }
  }
  if (in.remaining() != count * dim * 4) throw Error("segment: vector block size mismatch");
  for (float& v : index.data_) v = in.f32();
  check_finite(index.data_);

  std::vector<std::uint32_t> resolved;
  for (std::uint32_t node = 0; node < count; ++node) {
    for (std::uint32_t layer = 0; layer < raw[node].size(); ++layer) {
      resolved.clear();
      for (DocId n : raw[node][layer]) {
        auto it = index.index_of_.find(n);
        if (it == index.index_of_.end()) throw Error("segment: edge to unknown docId");
        resolved.push_back(it->second);
      }
      index.set_links(node, layer, resolved);
    }
  }
  if (count > 0) {
    auto it = index.index_of_.find(entry_id);
    if (it == index.index_of_.end()) throw Error("segment: unknown entry point");
    index.entry_ = it->second;
    index.max_level_ = max_level;
    if (index.levels_[index.entry_] != max_level) throw Error("segment: entry point level");
  }
  return index;
}

}  // namespace shardann
