#include "covidseg/ctio/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace covidseg {

double normalize_hu(double hu) {
  const double center = 0.5 * (kHuWindowLow + kHuWindowHigh);
  const double half_width = 0.5 * (kHuWindowHigh - kHuWindowLow);
  return std::clamp((hu - center) / half_width, -1.0, 1.0);
}

std::vector<double> normalize_hu(std::span<const std::int16_t> hu) {
  std::vector<double> out(hu.size());
  for (std::size_t i = 0; i < hu.size(); ++i) out[i] = normalize_hu(static_cast<double>(hu[i]));
  return out;
}

namespace {

double source_coord(std::size_t dst, std::size_t src_extent, std::size_t dst_extent) {
  return (static_cast<double>(dst) + 0.5) * (static_cast<double>(src_extent) / static_cast<double>(dst_extent)) - 0.5;
}

std::size_t nearest_index(std::size_t dst, std::size_t src_extent, std::size_t dst_extent) {
  const double s = std::floor((static_cast<double>(dst) + 0.5) * static_cast<double>(src_extent) /
                              static_cast<double>(dst_extent));
  return static_cast<std::size_t>(std::clamp(s, 0.0, static_cast<double>(src_extent - 1)));
}

}  // namespace

Slice resize_slice(std::span<const double> image, std::size_t height, std::size_t width, std::size_t target) {
  if (height != width) {
    throw std::invalid_argument("resize_slice: non-square slice " + std::to_string(height) + "x" + std::to_string(width));
  }
  if (height < 2) throw std::invalid_argument("resize_slice: slice must be at least 2x2");
  if (target < 8) throw std::invalid_argument("resize_slice: target size " + std::to_string(target) + " < 8");
  if (image.size() != height * width) throw std::invalid_argument("resize_slice: pixel count mismatch");

  Slice out{target, std::vector<double>(target * target)};
  if (target == height) {
    std::copy(image.begin(), image.end(), out.pixels.begin());
    return out;
  }
  const double max_coord = static_cast<double>(height - 1);
  for (std::size_t dy = 0; dy < target; ++dy) {
    const double sy = std::clamp(source_coord(dy, height, target), 0.0, max_coord);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t dx = 0; dx < target; ++dx) {
      const double sx = std::clamp(source_coord(dx, width, target), 0.0, max_coord);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, width - 1);
      const double fx = sx - static_cast<double>(x0);
      const double a = image[y0 * width + x0], b = image[y0 * width + x1];
      const double c = image[y1 * width + x0], d = image[y1 * width + x1];
      const double top = a + fx * (b - a);
      const double bottom = c + fx * (d - c);
      const double v = top + fy * (bottom - top);
      out.pixels[dy * target + dx] = std::clamp(v, std::min({a, b, c, d}), std::max({a, b, c, d}));
    }
  }
  return out;
}

std::vector<std::uint8_t> resize_labels(std::span<const std::uint8_t> labels, std::size_t height, std::size_t width,
                                        std::size_t out_height, std::size_t out_width) {
  if (labels.size() != height * width) throw std::invalid_argument("resize_labels: pixel count mismatch");
  std::vector<std::uint8_t> out(out_height * out_width);
  for (std::size_t y = 0; y < out_height; ++y) {
    const std::size_t sy = nearest_index(y, height, out_height);
    for (std::size_t x = 0; x < out_width; ++x) out[y * out_width + x] = labels[sy * width + nearest_index(x, width, out_width)];
  }
  return out;
}

std::vector<SliceTriple> make_triples(const std::vector<Slice>& slices) {
  if (slices.empty()) throw std::invalid_argument("make_triples: need at least one slice");
  const std::size_t s = slices.front().size;
  std::vector<SliceTriple> triples;
  triples.reserve(slices.size());
  const std::size_t last = slices.size() - 1;
  for (std::size_t z = 0; z < slices.size(); ++z) {
    const std::size_t members[3] = {z == 0 ? 0 : z - 1, z, z == last ? last : z + 1};
    SliceTriple t{Tensor({3, s, s}), z};
    for (std::size_t c = 0; c < 3; ++c) {
      const Slice& src = slices[members[c]];
      if (src.size != s) throw std::invalid_argument("make_triples: slices differ in size");
      std::memcpy(&t.image[c * s * s], src.pixels.data(), s * s * sizeof(double));
    }
    triples.push_back(std::move(t));
  }
  return triples;
}

std::vector<SliceTriple> prepare_volume(const CtVolume& volume, std::size_t target) {
  validate_volume(volume);
  std::vector<Slice> slices;
  slices.reserve(volume.depth);
  for (std::size_t z = 0; z < volume.depth; ++z) {
    const std::vector<double> norm =
        normalize_hu(std::span<const std::int16_t>(volume.slice(z), volume.slice_size()));
    slices.push_back(resize_slice(norm, volume.height, volume.width, target));
  }
  return make_triples(slices);
}

Tensor labels_to_onehot(std::span<const std::uint8_t> labels, std::size_t size, int num_classes) {
  if (labels.size() != size * size) throw std::invalid_argument("labels_to_onehot: expected a square label map");
  const auto classes = static_cast<std::size_t>(num_classes);
  Tensor out({classes, size, size}, 0.0);
  const std::size_t plane = size * size;
  for (std::size_t i = 0; i < plane; ++i) {
    if (labels[i] >= classes) {
      throw std::invalid_argument("labels_to_onehot: label " + std::to_string(labels[i]) + " at (" +
                                  std::to_string(i / size) + "," + std::to_string(i % size) + ") not below " +
                                  std::to_string(num_classes));
    }
    out[labels[i] * plane + i] = 1.0;
  }
  return out;
}

LabelVolume reconstruct_volume(const std::vector<Tensor>& per_slice_probs, const CtVolume& original) {
  if (per_slice_probs.size() != original.depth) {
    throw std::invalid_argument("reconstruct_volume: " + std::to_string(per_slice_probs.size()) +
                                " probability maps for a volume of " + std::to_string(original.depth) + " slices");
  }
  LabelVolume out(original.depth, original.height, original.width);
  out.spacing = original.spacing;
  out.origin = original.origin;
  for (std::size_t z = 0; z < original.depth; ++z) {
    const Tensor& p = per_slice_probs[z];
    if (p.rank() != 3 || p.dim(1) != p.dim(2)) {
      throw std::invalid_argument("reconstruct_volume: expected (C,S,S) maps, got " + shape_string(p.shape()));
    }
    const std::size_t classes = p.dim(0), s = p.dim(1), plane = s * s;
    std::vector<std::uint8_t> arg(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (p[c * plane + i] > p[best * plane + i]) best = c;
      arg[i] = static_cast<std::uint8_t>(best);
    }
    const std::vector<std::uint8_t> resized = resize_labels(arg, s, s, original.height, original.width);
    std::copy(resized.begin(), resized.end(), out.slice(z));
  }
  return out;
}

}  // namespace covidseg
