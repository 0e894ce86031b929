#include "shardann/partitioned_index.hpp"

#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "shardann/detail/binary.hpp"
#include "shardann/hash.hpp"
#include "shardann/parallel.hpp"

namespace shardann {

namespace {

constexpr int kManifestVersion = 1;
constexpr char kManifestName[] = "manifest.json";

std::string segment_file_name(std::uint32_t shard, std::uint32_t segment) {
  return "shard-" + std::to_string(shard) + "-segment-" + std::to_string(segment) + ".hnsw";
}

nlohmann::ordered_json params_json(const HnswParams& p) {
  nlohmann::ordered_json j;
  j["M"] = p.M;
  j["M0"] = p.M0;
  j["efConstruction"] = p.ef_construction;
  j["efSearch"] = p.ef_search;
  j["levelMult"] = p.level_mult;
  j["seed"] = p.seed;
  return j;
}

HnswParams params_from_json(const nlohmann::json& j) {
  HnswParams p;
  p.M = j.at("M").get<std::uint32_t>();
  p.M0 = j.at("M0").get<std::uint32_t>();
  p.ef_construction = j.at("efConstruction").get<std::uint32_t>();
  p.ef_search = j.at("efSearch").get<std::uint32_t>();
  p.level_mult = j.at("levelMult").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

}  // namespace

std::string_view to_string(SpillMode mode) {
  return mode == SpillMode::kVirtual ? "virtual" : "physical";
}

SpillMode parse_spill_mode(std::string_view name) {
  if (name == "virtual") return SpillMode::kVirtual;
  if (name == "physical") return SpillMode::kPhysical;
  throw Error("unknown spill mode: " + std::string(name));
}

std::uint32_t shard_of(std::string_view key, std::uint32_t num_shards) {
  if (num_shards == 0) throw Error("shard count must be positive");
  return static_cast<std::uint32_t>(fnv1a64(key) % num_shards);
}

std::string default_key(DocId id) { return std::to_string(id); }

std::uint64_t cell_seed(std::uint64_t base, std::size_t cell) {
  return base + std::uint64_t(cell) * 0x9E3779B97F4A7C15ULL;
}

std::size_t PartitionedIndex::cell(std::uint32_t shard, std::uint32_t segment) const {
  if (shard >= num_shards() || segment >= num_segments()) {
    throw Error("cell (" + std::to_string(shard) + ", " + std::to_string(segment) +
                ") out of range");
  }
  return std::size_t(shard) * num_segments() + segment;
}

const HnswIndex* PartitionedIndex::segment(std::uint32_t shard, std::uint32_t segment) const {
  const auto& c = cells_[cell(shard, segment)];
  return c ? &*c : nullptr;
}

std::size_t PartitionedIndex::segment_size(std::uint32_t shard, std::uint32_t segment) const {
  const auto* s = this->segment(shard, segment);
  return s ? s->size() : 0;
}

std::size_t PartitionedIndex::stored_count() const {
  std::size_t total = 0;
  for (const auto& c : cells_) total += c ? c->size() : 0;
  return total;
}

PartitionedIndex PartitionedIndex::build(const Dataset& data, const PartitionSpec& spec,
                                         const BuildOptions& options) {
  if (spec.num_shards == 0) throw Error("build: shard count must be positive");
  if (options.workers == 0) throw Error("build: workers must be positive");
  if (!options.keys.empty() && options.keys.size() != data.size()) {
    throw Error("build: key column length does not match dataset");
  }
  const auto& seg = spec.segmenter;
  if (seg.dim() != 0 && !data.empty() && seg.dim() != data.dim()) {
    throw Error("build: dataset dimension " + std::to_string(data.dim()) +
                " does not match segmenter dimension " + std::to_string(seg.dim()));
  }
  options.hnsw.validate();
  data.validate_for(options.distance);

  PartitionedIndex index;
  index.spec_ = spec;
  index.params_ = options.hnsw;
  if (index.params_.level_mult == 0.0) {
    index.params_.level_mult = HnswParams::for_m(index.params_.M).level_mult;
  }
  index.kind_ = options.distance;
  index.dim_ = data.dim() != 0 ? data.dim() : seg.dim();
  index.doc_count_ = data.size();
  index.spill_ = options.spill;

  const std::uint32_t segments = seg.num_segments();
  const std::size_t num_cells = std::size_t(spec.num_shards) * segments;
  std::vector<std::vector<std::size_t>> members(num_cells);
  for (std::size_t row = 0; row < data.size(); ++row) {
    const std::string key = options.keys.empty() ? default_key(data.id(row)) : options.keys[row];
    const std::uint32_t shard = shard_of(key, spec.num_shards);
    const auto x = data.row(row);
    if (options.spill == SpillMode::kPhysical) {
      for (std::uint32_t s : seg.route_document_spilled(x, key)) {
        members[std::size_t(shard) * segments + s].push_back(row);
      }
    } else {
      members[std::size_t(shard) * segments + seg.route_document(x, key)].push_back(row);
    }
  }

  index.cells_.resize(num_cells);
  parallel_for(num_cells, options.workers, [&](std::size_t c) {
    if (members[c].empty()) return;
    HnswParams p = index.params_;
    p.seed = cell_seed(index.params_.seed, c);
    const Dataset subset = data.subset(members[c]);
    index.cells_[c] = HnswIndex::build(subset, options.distance, p);
  });
  return index;
}

std::string PartitionedIndex::manifest_json() const {
  nlohmann::ordered_json j;
  j["format"] = "shardann-index";
  j["version"] = kManifestVersion;
  j["S"] = spec_.num_shards;
  j["segmenter"] = nlohmann::ordered_json::parse(spec_.segmenter.to_json());
  j["hnswParams"] = params_json(params_);
  j["distanceKind"] = std::string(to_string(kind_));
  j["dim"] = dim_;
  j["docCount"] = doc_count_;
  j["spillMode"] = std::string(to_string(spill_));
  auto entries = nlohmann::ordered_json::array();
  for (std::uint32_t s = 0; s < num_shards(); ++s) {
    for (std::uint32_t g = 0; g < num_segments(); ++g) {
      const auto* idx = segment(s, g);
      if (!idx) continue;
      nlohmann::ordered_json e;
      e["shard"] = s;
      e["segment"] = g;
      e["file"] = segment_file_name(s, g);
      e["count"] = idx->size();
      entries.push_back(std::move(e));
    }
  }
  j["segments"] = std::move(entries);
  return j.dump(2) + "\n";
}

void PartitionedIndex::save(const std::string& directory) const {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const fs::path dir(directory);
  for (std::uint32_t s = 0; s < num_shards(); ++s) {
    for (std::uint32_t g = 0; g < num_segments(); ++g) {
      if (const auto* idx = segment(s, g)) {
        detail::write_file((dir / segment_file_name(s, g)).string(), idx->serialize());
      }
    }
  }
  const auto manifest = manifest_json();
  detail::write_file((dir / kManifestName).string(),
                     std::span(reinterpret_cast<const std::uint8_t*>(manifest.data()),
                               manifest.size()));
}

PartitionedIndex PartitionedIndex::load(const std::string& directory) {
  namespace fs = std::filesystem;
  const fs::path dir(directory);
  const auto bytes = detail::read_file((dir / kManifestName).string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("manifest: malformed JSON: ") + e.what());
  }
  PartitionedIndex index;
  std::vector<nlohmann::json> entries;
  try {
    if (j.at("format").get<std::string>() != "shardann-index") throw Error("manifest: wrong format");
    if (j.at("version").get<int>() != kManifestVersion) {
      throw Error("manifest: unsupported version");
    }
    index.spec_.num_shards = j.at("S").get<std::uint32_t>();
    if (index.spec_.num_shards == 0) throw Error("manifest: S must be positive");
    index.spec_.segmenter = SegmenterTree::from_json(j.at("segmenter").dump());
    index.params_ = params_from_json(j.at("hnswParams"));
    index.kind_ = parse_distance_kind(j.at("distanceKind").get<std::string>());
    index.dim_ = j.at("dim").get<std::size_t>();
    index.doc_count_ = j.at("docCount").get<std::size_t>();
    index.spill_ = parse_spill_mode(j.at("spillMode").get<std::string>());
    for (const auto& e : j.at("segments")) entries.push_back(e);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("manifest: ") + e.what());
  }

  index.cells_.resize(std::size_t(index.num_shards()) * index.num_segments());
  std::set<std::size_t> seen;
  for (const auto& e : entries) {
    std::uint32_t shard = 0, seg = 0;
    std::size_t count = 0;
    std::string file;
    try {
      shard = e.at("shard").get<std::uint32_t>();
      seg = e.at("segment").get<std::uint32_t>();
      count = e.at("count").get<std::size_t>();
      file = e.at("file").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(std::string("manifest: bad segment entry: ") + ex.what());
    }
    const std::size_t c = index.cell(shard, seg);
    if (!seen.insert(c).second) throw Error("manifest: duplicate segment entry");
    const fs::path path = dir / file;
    if (!fs::exists(path)) throw Error("manifest references missing segment file " + file);
    auto hnsw = HnswIndex::deserialize(detail::read_file(path.string()));
    if (hnsw.dim() != index.dim_) throw Error("segment " + file + ": dimension mismatch");
    if (hnsw.distance_kind() != index.kind_) {
      throw Error("segment " + file + ": distance function mismatch");
    }
    if (hnsw.size() != count) throw Error("segment " + file + ": document count mismatch");
    const auto& p = hnsw.params();
    if (p.M != index.params_.M || p.M0 != index.params_.M0 ||
        p.ef_construction != index.params_.ef_construction) {
      throw Error("segment " + file + ": HNSW parameters differ from manifest");
    }
    index.cells_[c] = std::move(hnsw);
  }
  return index;
}

}  // namespace shardann
