#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "manograph/tensor.hpp"

#include "json.hpp"

namespace manograph {

/// Container persisted as a single file: a fixed header, a JSON manifest
/// listing named tensors {name, dtype, shape, offset}, and one contiguous
/// little-endian binary blob. Float tensors may be stored as f32 or f64;
/// integer vectors are stored as i64. Free-form JSON config rides along in
/// the manifest.
///
/// Layout: magic "MGAR" | u32 version | u64 manifest byte length |
///         manifest (UTF-8 JSON) | blob.
struct Archive {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::vector<std::int64_t>> ints;
  nlohmann::json config = nlohmann::json::object();
};

inline constexpr std::uint32_t kArchiveVersion = 1;

// float_dtype selects on-disk storage for float tensors: "f64" or "f32".
// Round-trips are bit-exact when the storage dtype matches the built Scalar.
void save_archive(const std::filesystem::path& path, const Archive& archive,
                  const std::string& float_dtype = sizeof(Scalar) == 8 ? "f64" : "f32");

// Throws std::runtime_error with distinct messages for a corrupt manifest,
// a shape/blob mismatch, an unsupported dtype, or an unsupported version.
Archive load_archive(const std::filesystem::path& path);

}  // namespace manograph
