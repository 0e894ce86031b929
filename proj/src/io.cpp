#include "shardann/io.hpp"

#include <fstream>
#include <iterator>

#include "shardann/detail/binary.hpp"

namespace shardann {
namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

}  // namespace detail

namespace {

template <typename T, typename ReadOne>
std::vector<std::vector<T>> read_records(const std::string& path, ReadOne read_one) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader in(bytes);
  std::vector<std::vector<T>> rows;
  std::int64_t width = -1;
  while (!in.done()) {
    const std::int32_t d = in.i32();
    if (d < 0) throw Error(path + ": negative record length " + std::to_string(d));
    if (width >= 0 && d != width) {
      throw Error(path + ": inconsistent record length " + std::to_string(d) + " (expected " +
                  std::to_string(width) + ")");
    }
    width = d;
    if (in.remaining() < std::size_t(d) * 4) throw Error(path + ": truncated record");
    std::vector<T> row(static_cast<std::size_t>(d));
    for (auto& v : row) v = read_one(in);
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename T, typename WriteOne>
void write_records(const std::vector<std::vector<T>>& rows, const std::string& path,
                   WriteOne write_one) {
  detail::ByteWriter out;
  for (const auto& row : rows) {
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(path + ": all records must share one length");
    }
    out.i32(static_cast<std::int32_t>(row.size()));
    for (const auto& v : row) write_one(out, v);
  }
  detail::write_file(path, out.buffer());
}

}  // namespace

std::vector<std::vector<float>> load_fvecs_rows(const std::string& path) {
  return read_records<float>(path, [](detail::ByteReader& in) { return in.f32(); });
}

void save_fvecs_rows(const std::vector<std::vector<float>>& rows, const std::string& path) {
  write_records(rows, path, [](detail::ByteWriter& out, float v) { out.f32(v); });
}

Dataset load_fvecs(const std::string& path) {
  auto rows = load_fvecs_rows(path);
  if (rows.empty()) throw Error(path + ": empty fvecs file, dimension unknown");
  if (rows.front().empty()) throw Error(path + ": zero-dimensional records");
  const std::size_t dim = rows.front().size();
  std::vector<float> flat;
  flat.reserve(rows.size() * dim);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Dataset::from_rows(dim, std::move(flat));
}

void save_fvecs(const Dataset& dataset, const std::string& path) {
  detail::ByteWriter out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out.i32(static_cast<std::int32_t>(dataset.dim()));
    for (float v : dataset.row(i)) out.f32(v);
  }
  detail::write_file(path, out.buffer());
}

std::vector<std::vector<std::int32_t>> load_ivecs(const std::string& path) {
  return read_records<std::int32_t>(path, [](detail::ByteReader& in) { return in.i32(); });
}

void save_ivecs(const std::vector<std::vector<std::int32_t>>& rows, const std::string& path) {
  write_records(rows, path, [](detail::ByteWriter& out, std::int32_t v) { out.i32(v); });
}

}  // namespace shardann
