#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace covidseg {

// Voxel grid stored (Z, H, W) row-major, x fastest. Spacing is (sz, sy, sx) mm.
template <typename T>
struct Volume {
  std::size_t depth = 0, height = 0, width = 0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<T> data;

  Volume() = default;
  Volume(std::size_t z, std::size_t h, std::size_t w, T fill = T{})
      : depth(z), height(h), width(w), data(z * h * w, fill) {}

  std::size_t slice_size() const { return height * width; }
  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * height + y) * width + x; }
  T& at(std::size_t z, std::size_t y, std::size_t x) { return data[index(z, y, x)]; }
  const T& at(std::size_t z, std::size_t y, std::size_t x) const { return data[index(z, y, x)]; }
  const T* slice(std::size_t z) const { return data.data() + z * slice_size(); }
  T* slice(std::size_t z) { return data.data() + z * slice_size(); }

  bool same_grid(std::size_t z, std::size_t h, std::size_t w) const { return depth == z && height == h && width == w; }
  template <typename U>
  bool same_grid(const Volume<U>& other) const {
    return same_grid(other.depth, other.height, other.width);
  }
};

// Hounsfield units.
using CtVolume = Volume<std::int16_t>;
// 0 = outside-body air, 1 = body (other), 2 = normal lung, 3 = infection.
using LabelVolume = Volume<std::uint8_t>;
using FloatVolume = Volume<float>;

inline constexpr std::uint8_t kClassAir = 0;
inline constexpr std::uint8_t kClassBody = 1;
inline constexpr std::uint8_t kClassNormal = 2;
inline constexpr std::uint8_t kClassInfection = 3;
inline constexpr int kNumClasses = 4;

// Checks Z >= 1, H, W >= 8 and positive spacing.
template <typename T>
void validate_volume(const Volume<T>& v) {
  if (v.depth < 1 || v.height < 8 || v.width < 8) {
    throw std::invalid_argument("volume extents (" + std::to_string(v.depth) + "," + std::to_string(v.height) + "," +
                                std::to_string(v.width) + ") violate Z >= 1, H >= 8, W >= 8");
  }
  for (double s : v.spacing)
    if (!(s > 0.0)) throw std::invalid_argument("volume spacing must be positive");
  if (v.data.size() != v.depth * v.height * v.width) throw std::invalid_argument("volume payload size mismatch");
}

void validate_labels(const LabelVolume& labels);

}  // namespace covidseg
