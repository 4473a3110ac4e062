#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "covidseg/core/tensor.hpp"
#include "covidseg/ctio/volume.hpp"

namespace covidseg {

// Linear map of the HU window [-2050, 950] onto [-1, 1], clamped outside it.
inline constexpr double kHuWindowLow = -2050.0;
inline constexpr double kHuWindowHigh = 950.0;
double normalize_hu(double hu);
std::vector<double> normalize_hu(std::span<const std::int16_t> hu);

// Square 2-D image, row-major.
struct Slice {
  std::size_t size = 0;
  std::vector<double> pixels;
};

// Bilinear resampling of a square H x H image to S x S with half-pixel centres:
// src = (dst + 0.5) * H / S - 0.5, clamped to the image. Rejects non-square
// input, H < 2 and S < 8.
Slice resize_slice(std::span<const double> image, std::size_t height, std::size_t width, std::size_t target);

// Nearest-neighbour resampling of a categorical grid with the same coordinate map.
std::vector<std::uint8_t> resize_labels(std::span<const std::uint8_t> labels, std::size_t height, std::size_t width,
                                        std::size_t out_height, std::size_t out_width);

struct SliceTriple {
  Tensor image;  // (3, S, S), channels (z-1, z, z+1) with edge replication
  std::size_t center_index = 0;
};

std::vector<SliceTriple> make_triples(const std::vector<Slice>& slices);

// Normalize, resize to S and stack into triples; one triple per slice.
std::vector<SliceTriple> prepare_volume(const CtVolume& volume, std::size_t target);

// (num_classes, S, S) one-hot encoding. Rejects labels >= num_classes, naming
// the value and pixel.
Tensor labels_to_onehot(std::span<const std::uint8_t> labels, std::size_t size, int num_classes);

// Per-slice argmax over classes (lowest id wins ties), then nearest-neighbour
// resize back to the original in-plane grid. Output geometry copies `original`.
LabelVolume reconstruct_volume(const std::vector<Tensor>& per_slice_probs, const CtVolume& original);

}  // namespace covidseg
