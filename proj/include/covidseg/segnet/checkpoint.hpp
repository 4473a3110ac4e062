#pragma once

#include <filesystem>

#include "covidseg/segnet/model.hpp"
#include "json.hpp"

namespace covidseg {

// Checkpoint layout:
//   bytes 0-7   magic "CSEGCKPT"
//   bytes 8-15  manifest length L, uint64 little-endian
//   L bytes     manifest JSON: {format, version, config, seed, parameters: [{name, shape,
//               offset, count}], blob_bytes, metadata}
//   blob        float64 little-endian values; parameter offsets are byte offsets into it
void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& metadata = {});

struct LoadedCheckpoint {
  Model model;
  nlohmann::json metadata;
};

// Rejects the file when parameter names or shapes disagree with the ones the
// stored config would build.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace covidseg
