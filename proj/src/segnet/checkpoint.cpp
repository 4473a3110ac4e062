#include "covidseg/segnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace covidseg {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void append_le(std::vector<char>& out, double v) {
  std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
  const auto* p = reinterpret_cast<const char*>(&bits);
  out.insert(out.end(), p, p + 8);
}

double read_le(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  return std::bit_cast<double>(to_le(bits));
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& metadata) {
  nlohmann::json params = nlohmann::json::array();
  std::vector<char> blob;
  blob.reserve(model.params.parameter_count() * 8);
  for (const auto& [name, tensor] : model.params) {
    params.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", blob.size()}, {"count", tensor.size()}});
    for (double v : tensor.data()) append_le(blob, v);
  }
  nlohmann::json manifest{{"format", "covidseg-checkpoint"},
                          {"version", 1},
                          {"config", model.config},
                          {"seed", model.seed},
                          {"parameters", std::move(params)},
                          {"blob_bytes", blob.size()},
                          {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata}};
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(kMagic, 8);
  const std::uint64_t len = to_le(text.size());
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) fail(path, "write failed");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) fail(path, "bad magic");
  std::uint64_t len;
  std::memcpy(&len, bytes.data() + 8, 8);
  len = to_le(len);
  if (len > bytes.size() - 16) fail(path, "truncated manifest");
  const nlohmann::json manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<long>(len));
  if (manifest.value("format", "") != "covidseg-checkpoint") fail(path, "unknown format tag");

  const ModelConfig config = manifest.at("config").get<ModelConfig>();
  const std::uint64_t seed = manifest.at("seed").get<std::uint64_t>();
  LoadedCheckpoint result{build_model(config, seed), manifest.value("metadata", nlohmann::json::object())};

  const char* blob = bytes.data() + 16 + len;
  const std::size_t blob_size = bytes.size() - 16 - len;
  if (manifest.at("blob_bytes").get<std::size_t>() != blob_size) fail(path, "blob size disagrees with manifest");

  const auto& params = manifest.at("parameters");
  if (params.size() != result.model.params.size()) {
    fail(path, "holds " + std::to_string(params.size()) + " parameters but the config builds " +
                   std::to_string(result.model.params.size()));
  }
  for (const auto& entry : params) {
    const std::string name = entry.at("name").get<std::string>();
    if (!result.model.params.contains(name)) fail(path, "parameter '" + name + "' is not part of the configured model");
    Tensor& t = result.model.params.at(name);
    const Shape shape = entry.at("shape").get<Shape>();
    if (shape != t.shape()) {
      fail(path, "parameter '" + name + "' has shape " + shape_string(shape) + ", config expects " +
                     shape_string(t.shape()));
    }
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if (offset + t.size() * 8 > blob_size) fail(path, "parameter '" + name + "' runs past the blob");
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_le(blob + offset + 8 * i);
  }
  return result;
}

}  // namespace covidseg
