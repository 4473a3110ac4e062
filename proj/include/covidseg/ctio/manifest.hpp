#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace covidseg {

struct CaseEntry {
  std::string id;
  std::filesystem::path ct_path;
  std::filesystem::path label_path;
};

// JSON: {"cases": [{"id", "ct_path", "label_path"}, ...]}. Relative paths are
// resolved against the manifest's directory on load.
struct Manifest {
  std::vector<CaseEntry> cases;

  std::vector<std::string> ids() const;
  const CaseEntry& find(const std::string& id) const;
};

Manifest load_manifest(const std::filesystem::path& path);
// Paths are written relative to the manifest directory when they live below it.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace covidseg
