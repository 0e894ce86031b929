#pragma once

// fvecs / ivecs containers: per record an int32 length followed by that many
// float32 (fvecs) or int32 (ivecs) values, little-endian. All records in a
// file share the same length.

#include <cstdint>
#include <string>
#include <vector>

#include "shardann/core.hpp"

namespace shardann {

/// Loads vectors with positional docIds 0..n-1. An empty file is an error since
/// the dimension cannot be known.
Dataset load_fvecs(const std::string& path);

/// Writes the vectors of `dataset` in row order (ids are not stored).
void save_fvecs(const Dataset& dataset, const std::string& path);

/// Raw float rows, no finiteness check. Used for distance result files.
std::vector<std::vector<float>> load_fvecs_rows(const std::string& path);
void save_fvecs_rows(const std::vector<std::vector<float>>& rows, const std::string& path);

/// An empty ivecs file is a valid zero-row table.
std::vector<std::vector<std::int32_t>> load_ivecs(const std::string& path);
void save_ivecs(const std::vector<std::vector<std::int32_t>>& rows, const std::string& path);

}  // namespace shardann
