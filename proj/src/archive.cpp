#include "manograph/archive.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace manograph {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'A', 'R'};

// All multi-byte values little-endian; this code assumes a little-endian
// host (checked at startup of save/load).
void require_little_endian() {
  const std::uint32_t probe = 1;
  char byte;
  std::memcpy(&byte, &probe, 1);
  if (byte != 1) throw std::runtime_error("archive: big-endian hosts are unsupported");
}

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value;
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("archive: truncated header");
  return value;
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "f64" || dtype == "i64") return 8;
  if (dtype == "f32") return 4;
  throw std::runtime_error("archive: unsupported dtype '" + dtype + "'");
}

}  // namespace

void save_archive(const std::filesystem::path& path, const Archive& archive,
                  const std::string& float_dtype) {
  require_little_endian();
  if (float_dtype != "f32" && float_dtype != "f64")
    throw std::runtime_error("archive: unsupported dtype '" + float_dtype + "'");

  nlohmann::json manifest;
  manifest["config"] = archive.config;
  auto& entries = manifest["tensors"] = nlohmann::json::array();

  std::vector<char> blob;
  auto append = [&blob](const void* src, std::size_t bytes) {
    const std::size_t offset = blob.size();
    blob.resize(offset + bytes);
    std::memcpy(blob.data() + offset, src, bytes);
    return offset;
  };

  for (const auto& [name, tensor] : archive.tensors) {
    std::size_t offset;
    if (float_dtype == "f64") {
      std::vector<double> tmp(tensor.size());
      for (std::size_t i = 0; i < tensor.size(); ++i) tmp[i] = static_cast<double>(tensor[i]);
      offset = append(tmp.data(), tmp.size() * sizeof(double));
    } else {
      std::vector<float> tmp(tensor.size());
      for (std::size_t i = 0; i < tensor.size(); ++i) tmp[i] = static_cast<float>(tensor[i]);
      offset = append(tmp.data(), tmp.size() * sizeof(float));
    }
    entries.push_back({{"name", name},
                       {"dtype", float_dtype},
                       {"shape", tensor.shape()},
                       {"offset", offset}});
  }
  for (const auto& [name, values] : archive.ints) {
    const std::size_t offset = append(values.data(), values.size() * sizeof(std::int64_t));
    entries.push_back({{"name", name},
                       {"dtype", "i64"},
                       {"shape", std::vector<std::size_t>{values.size()}},
                       {"offset", offset}});
  }

  const std::string manifest_str = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("archive: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kArchiveVersion);
  write_pod<std::uint64_t>(os, manifest_str.size());
  os.write(manifest_str.data(), static_cast<std::streamsize>(manifest_str.size()));
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!os) throw std::runtime_error("archive: write failed for '" + path.string() + "'");
}

Archive load_archive(const std::filesystem::path& path) {
  require_little_endian();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("archive: cannot open '" + path.string() + "'");

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("archive: bad magic in '" + path.string() + "'");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kArchiveVersion)
    throw std::runtime_error("archive: unsupported version " + std::to_string(version));
  const auto manifest_len = read_pod<std::uint64_t>(is);

  std::string manifest_str(manifest_len, '\0');
  is.read(manifest_str.data(), static_cast<std::streamsize>(manifest_len));
  if (!is) throw std::runtime_error("archive: truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_str);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("archive: corrupt manifest: ") + e.what());
  }

  std::vector<char> blob((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());

  Archive archive;
  if (manifest.contains("config")) archive.config = manifest["config"];
  if (!manifest.contains("tensors") || !manifest["tensors"].is_array())
    throw std::runtime_error("archive: corrupt manifest: missing tensor table");

  for (const auto& entry : manifest["tensors"]) {
    const std::string name = entry.at("name").get<std::string>();
    const std::string dtype = entry.at("dtype").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    const std::size_t bytes = count * dtype_size(dtype);
    if (offset + bytes > blob.size())
      throw std::runtime_error("archive: shape/blob mismatch for tensor '" + name + "'");

    if (dtype == "i64") {
      std::vector<std::int64_t> values(count);
      std::memcpy(values.data(), blob.data() + offset, bytes);
      archive.ints[name] = std::move(values);
    } else if (dtype == "f64") {
      std::vector<double> tmp(count);
      std::memcpy(tmp.data(), blob.data() + offset, bytes);
      Tensor t(shape);
      for (std::size_t i = 0; i < count; ++i) t[i] = static_cast<Scalar>(tmp[i]);
      archive.tensors[name] = std::move(t);
    } else {  // f32 (dtype_size already rejected anything else)
      std::vector<float> tmp(count);
      std::memcpy(tmp.data(), blob.data() + offset, bytes);
      Tensor t(shape);
      for (std::size_t i = 0; i < count; ++i) t[i] = static_cast<Scalar>(tmp[i]);
      archive.tensors[name] = std::move(t);
    }
  }
  return archive;
}

}  // namespace manograph
