#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>

#include "covidseg/ctio/volume.hpp"
#include "json.hpp"

namespace covidseg {

struct HuDistribution {
  double mean = 0.0;
  double sd = 0.0;
};

// Synthetic chest CT: ellipsoidal body, two ellipsoidal lungs, and spherical
// infection blobs (GGO or consolidation) clipped to the lungs.
struct PhantomConfig {
  std::size_t depth = 32, height = 96, width = 96;
  std::array<double, 3> spacing{2.0, 0.75, 0.75};
  HuDistribution body{40.0, 10.0};
  HuDistribution lung{-800.0, 30.0};
  HuDistribution ggo{-450.0, 60.0};
  HuDistribution consolidation{50.0, 40.0};
  double air_hu = -1000.0;
  int blob_count_min = 0;  // per lung
  int blob_count_max = 5;
  double blob_radius_min = 4.0;  // voxels
  double blob_radius_max = 9.0;
  // H and W must be multiples of this (2^depth of the model that will consume the data).
  std::size_t size_multiple = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);

struct Phantom {
  CtVolume ct;
  LabelVolume labels;
  std::uint64_t effective_seed = 0;  // seed actually used after retries
};

// Deterministic in config (including seed). When blob_count_max > 0 and a draw
// yields no infection voxel, retries with seed + k * 2^32, k = 1, 2, ...
Phantom generate_phantom(const PhantomConfig& config);

// Writes case_NNN_ct.nii / case_NNN_label.nii for seeds base_seed + i plus
// manifest.json; returns the manifest path.
std::filesystem::path generate_dataset(int count, std::uint64_t base_seed, const std::filesystem::path& out_dir,
                                       PhantomConfig config = {});

}  // namespace covidseg
