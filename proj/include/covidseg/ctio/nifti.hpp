#pragma once

#include <filesystem>
#include <variant>

#include "covidseg/ctio/volume.hpp"

namespace covidseg {

// Single-file uncompressed little-endian NIfTI-1 (.nii), 3-D, datatype 2 (uint8),
// 4 (int16) or 16 (float32).
using NiftiVolume = std::variant<CtVolume, LabelVolume, FloatVolume>;

// Applies scl_slope/scl_inter (slope 0 means 1). Integer volumes keep their type
// when the scaled values stay integral and in range, otherwise they are returned
// as float32.
NiftiVolume read_nifti(const std::filesystem::path& path);

// Convenience readers. read_ct accepts any supported datatype (float values are
// rounded and saturated to int16); read_labels requires integral values in 0..3.
CtVolume read_ct(const std::filesystem::path& path);
LabelVolume read_labels(const std::filesystem::path& path);

// 348-byte header, magic "n+1", vox_offset 352, scl_slope 1, scl_inter 0.
void write_nifti(const CtVolume& volume, const std::filesystem::path& path);
void write_nifti(const LabelVolume& volume, const std::filesystem::path& path);
void write_nifti(const FloatVolume& volume, const std::filesystem::path& path);

}  // namespace covidseg
