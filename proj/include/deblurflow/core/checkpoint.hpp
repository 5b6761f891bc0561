#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "deblurflow/core/error.hpp"
#include "deblurflow/model/nn.hpp"

// Checkpoint directory layout:
//   manifest.json   metadata plus a tensor table {name, file, shape}
//   <name>.bin      "DFT1", uint32 ndim, uint32 dims[ndim], float32 data (little-endian)

namespace deblurflow::ckpt {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void write_tensor(const fs::path& file, const Mat<float>& m) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw NotFound("cannot write " + file.string());
  const std::uint32_t header[3] = {2, static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  out.write("DFT1", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!out) throw NotFound("short write to " + file.string());
}

inline Mat<float> read_tensor(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw NotFound("missing tensor file " + file.string());
  char magic[4];
  std::uint32_t ndim = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&ndim), 4);
  if (!in || std::memcmp(magic, "DFT1", 4) != 0 || ndim < 1 || ndim > 2) throw InvalidArgument("bad tensor file " + file.string());
  std::uint32_t dims[2] = {1, 1};
  in.read(reinterpret_cast<char*>(dims), 4 * ndim);
  if (ndim == 1) std::swap(dims[0], dims[1]);
  Mat<float> m(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!in) throw InvalidArgument("truncated tensor file " + file.string());
  return m;
}

inline std::string file_name(const std::string& tensor) { return tensor + ".bin"; }

/// Writes tensors and metadata to `dir` atomically: everything lands in a
/// sibling temp directory that is renamed into place at the end.
template <typename T>
void save(const fs::path& dir, const nn::ParamList<T>& params, json meta) {
  const fs::path tmp = dir.parent_path() / (dir.filename().string() + ".tmp");
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  json table = json::array();
  for (const auto* p : params) {
    write_tensor(tmp / file_name(p->name), p->value.template cast<float>());
    table.push_back({{"name", p->name}, {"file", file_name(p->name)}, {"shape", {p->value.rows(), p->value.cols()}}});
  }
  meta["format"] = "deblurflow-checkpoint-1";
  meta["tensors"] = table;
  std::ofstream(tmp / "manifest.json") << meta.dump(2) << "\n";
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

inline json read_meta(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw DependencyError("checkpoint not found: " + dir.string());
  return json::parse(in);
}

/// Fills every tensor in `params` from `dir`. Tensors present in the
/// checkpoint but absent from `params` are ignored.
template <typename T>
void load(const fs::path& dir, const nn::ParamList<T>& params) {
  const json meta = read_meta(dir);
  std::map<std::string, std::string> files;
  for (const auto& t : meta.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();
  for (auto* p : params) {
    auto it = files.find(p->name);
    if (it == files.end()) throw DependencyError("checkpoint " + dir.string() + " lacks tensor " + p->name);
    const Mat<float> m = read_tensor(dir / it->second);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw InvalidArgument("tensor " + p->name + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            " in checkpoint, expected " + std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    p->value = m.template cast<T>();
  }
}

}  // namespace deblurflow::ckpt
