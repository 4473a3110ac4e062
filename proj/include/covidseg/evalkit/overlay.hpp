#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "covidseg/ctio/volume.hpp"

namespace covidseg {

enum class OverlayPlane { Axial, Coronal };

OverlayPlane parse_plane(const std::string& name);

struct RgbImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // RGB interleaved, row-major
};

// Axial slice z, or coronal row y with its Z axis stretched by sz / sx.
RgbImage overlay_image(const CtVolume& ct, const LabelVolume& labels, OverlayPlane plane, std::size_t index);

void write_png(const RgbImage& image, const std::filesystem::path& path);

// One slice_%04d.png per axial slice (Z files) or coronal row (H files).
// Returns the written paths.
std::vector<std::filesystem::path> render_overlay(const CtVolume& ct, const LabelVolume& labels,
                                                  const std::filesystem::path& out_dir, OverlayPlane plane);

}  // namespace covidseg
