#include "covidseg/ctio/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace covidseg {

void validate_labels(const LabelVolume& labels) {
  validate_volume(labels);
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    if (labels.data[i] >= kNumClasses) {
      throw std::invalid_argument("label value " + std::to_string(labels.data[i]) + " at voxel " + std::to_string(i) +
                                  " outside {0,1,2,3}");
    }
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

enum : std::int16_t { kUint8 = 2, kInt16 = 4, kFloat32 = 16 };

template <typename T>
void put(std::vector<char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("nifti " + path.string() + ": " + what);
}

template <typename T>
constexpr std::int16_t datatype_code() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return kUint8;
  else if constexpr (std::is_same_v<T, std::int16_t>) return kInt16;
  else return kFloat32;
}

template <typename T>
void write_impl(const Volume<T>& v, const std::filesystem::path& path) {
  validate_volume(v);
  std::vector<char> header(kVoxOffset, 0);
  put<std::int32_t>(header, 0, static_cast<std::int32_t>(kHeaderSize));
  header[38] = 'r';
  const std::int16_t dims[8] = {3, static_cast<std::int16_t>(v.width), static_cast<std::int16_t>(v.height),
                                static_cast<std::int16_t>(v.depth), 1, 1, 1, 1};
  if (v.width > 32767 || v.height > 32767 || v.depth > 32767) fail(path, "extent exceeds NIfTI-1 limit");
  for (int i = 0; i < 8; ++i) put<std::int16_t>(header, 40 + 2 * i, dims[i]);
  put<std::int16_t>(header, 70, datatype_code<T>());
  put<std::int16_t>(header, 72, static_cast<std::int16_t>(8 * sizeof(T)));
  const float pixdim[8] = {1.0f, static_cast<float>(v.spacing[2]), static_cast<float>(v.spacing[1]),
                           static_cast<float>(v.spacing[0]), 0.0f, 0.0f, 0.0f, 0.0f};
  for (int i = 0; i < 8; ++i) put<float>(header, 76 + 4 * i, pixdim[i]);
  put<float>(header, 108, static_cast<float>(kVoxOffset));
  put<float>(header, 112, 1.0f);
  put<float>(header, 116, 0.0f);
  header[123] = 2;  // xyzt_units: millimetres
  put<std::int16_t>(header, 252, 1);  // qform_code: scanner
  put<float>(header, 268, static_cast<float>(v.origin[2]));
  put<float>(header, 272, static_cast<float>(v.origin[1]));
  put<float>(header, 276, static_cast<float>(v.origin[0]));
  std::memcpy(header.data() + 344, "n+1\0", 4);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(v.data.data()), static_cast<std::streamsize>(v.data.size() * sizeof(T)));
  if (!out) fail(path, "write failed");
}

template <typename T>
Volume<T> make_volume(std::size_t z, std::size_t h, std::size_t w, const std::array<double, 3>& spacing,
                      const std::array<double, 3>& origin) {
  Volume<T> v(z, h, w);
  v.spacing = spacing;
  v.origin = origin;
  return v;
}

template <typename Src>
NiftiVolume scale_integer(const Src* raw, std::size_t n, double slope, double inter, std::size_t z, std::size_t h,
                          std::size_t w, const std::array<double, 3>& spacing, const std::array<double, 3>& origin) {
  using Lim = std::numeric_limits<Src>;
  const bool identity = slope == 1.0 && inter == 0.0;
  bool stays = true;
  if (!identity) {
    for (std::size_t i = 0; i < n && stays; ++i) {
      const double v = slope * static_cast<double>(raw[i]) + inter;
      stays = v == std::floor(v) && v >= static_cast<double>(Lim::min()) && v <= static_cast<double>(Lim::max());
    }
  }
  if (stays) {
    auto vol = make_volume<Src>(z, h, w, spacing, origin);
    for (std::size_t i = 0; i < n; ++i) {
      vol.data[i] = identity ? raw[i] : static_cast<Src>(slope * static_cast<double>(raw[i]) + inter);
    }
    return vol;
  }
  auto vol = make_volume<float>(z, h, w, spacing, origin);
  for (std::size_t i = 0; i < n; ++i) vol.data[i] = static_cast<float>(slope * static_cast<double>(raw[i]) + inter);
  return vol;
}

}  // namespace

NiftiVolume read_nifti(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f && static_cast<unsigned char>(bytes[1]) == 0x8b) {
    fail(path, "gzip-compressed stream (only uncompressed .nii is supported)");
  }
  if (bytes.size() < kHeaderSize) fail(path, "truncated header");
  const auto sizeof_hdr = get<std::int32_t>(bytes, 0);
  if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    if (__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr)) == kHeaderSize) fail(path, "big-endian file not supported");
    fail(path, "sizeof_hdr is " + std::to_string(sizeof_hdr) + ", expected 348");
  }
  if (std::memcmp(bytes.data() + 344, "n+1\0", 4) != 0) fail(path, "bad magic (expected single-file \"n+1\")");

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(bytes, 40 + 2 * i);
  if (dim[0] != 3) fail(path, "dim[0] is " + std::to_string(dim[0]) + ", only 3-D volumes are supported");
  if (dim[1] < 1 || dim[2] < 1 || dim[3] < 1) fail(path, "non-positive extent");
  const auto datatype = get<std::int16_t>(bytes, 70);
  std::size_t elem = 0;
  switch (datatype) {
    case kUint8: elem = 1; break;
    case kInt16: elem = 2; break;
    case kFloat32: elem = 4; break;
    default: fail(path, "unsupported datatype code " + std::to_string(datatype));
  }
  const auto w = static_cast<std::size_t>(dim[1]), h = static_cast<std::size_t>(dim[2]), z = static_cast<std::size_t>(dim[3]);
  const std::array<double, 3> spacing{get<float>(bytes, 76 + 12), get<float>(bytes, 76 + 8), get<float>(bytes, 76 + 4)};
  const std::array<double, 3> origin{get<float>(bytes, 276), get<float>(bytes, 272), get<float>(bytes, 268)};
  const auto vox_offset = static_cast<std::size_t>(get<float>(bytes, 108));
  double slope = get<float>(bytes, 112);
  const double inter = get<float>(bytes, 116);
  if (slope == 0.0 || !std::isfinite(slope)) slope = 1.0;

  const std::size_t n = w * h * z;
  if (vox_offset < kHeaderSize || bytes.size() < vox_offset + n * elem) fail(path, "truncated voxel payload");
  const char* payload = bytes.data() + vox_offset;

  switch (datatype) {
    case kUint8: {
      std::vector<std::uint8_t> raw(n);
      std::memcpy(raw.data(), payload, n);
      return scale_integer(raw.data(), n, slope, std::isfinite(inter) ? inter : 0.0, z, h, w, spacing, origin);
    }
    case kInt16: {
      std::vector<std::int16_t> raw(n);
      std::memcpy(raw.data(), payload, n * 2);
      return scale_integer(raw.data(), n, slope, std::isfinite(inter) ? inter : 0.0, z, h, w, spacing, origin);
    }
    default: {
      auto vol = make_volume<float>(z, h, w, spacing, origin);
      std::memcpy(vol.data.data(), payload, n * 4);
      if (slope != 1.0 || (std::isfinite(inter) && inter != 0.0)) {
        for (float& v : vol.data) v = static_cast<float>(slope * v + (std::isfinite(inter) ? inter : 0.0));
      }
      return vol;
    }
  }
}

CtVolume read_ct(const std::filesystem::path& path) {
  NiftiVolume any = read_nifti(path);
  if (auto* ct = std::get_if<CtVolume>(&any)) return std::move(*ct);
  auto convert = [](const auto& src) {
    CtVolume out(src.depth, src.height, src.width);
    out.spacing = src.spacing;
    out.origin = src.origin;
    for (std::size_t i = 0; i < src.data.size(); ++i) {
      const double v = std::round(static_cast<double>(src.data[i]));
      out.data[i] = static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
    }
    return out;
  };
  if (auto* lab = std::get_if<LabelVolume>(&any)) return convert(*lab);
  return convert(std::get<FloatVolume>(any));
}

LabelVolume read_labels(const std::filesystem::path& path) {
  NiftiVolume any = read_nifti(path);
  LabelVolume out;
  if (auto* lab = std::get_if<LabelVolume>(&any)) {
    out = std::move(*lab);
  } else {
    auto convert = [&](const auto& src) {
      out = LabelVolume(src.depth, src.height, src.width);
      out.spacing = src.spacing;
      out.origin = src.origin;
      for (std::size_t i = 0; i < src.data.size(); ++i) {
        const double v = static_cast<double>(src.data[i]);
        if (v != std::floor(v) || v < 0 || v >= kNumClasses) {
          fail(path, "label value " + std::to_string(v) + " at voxel " + std::to_string(i) + " outside {0,1,2,3}");
        }
        out.data[i] = static_cast<std::uint8_t>(v);
      }
    };
    if (auto* ct = std::get_if<CtVolume>(&any)) convert(*ct);
    else convert(std::get<FloatVolume>(any));
  }
  validate_labels(out);
  return out;
}

void write_nifti(const CtVolume& volume, const std::filesystem::path& path) { write_impl(volume, path); }
void write_nifti(const LabelVolume& volume, const std::filesystem::path& path) { write_impl(volume, path); }
void write_nifti(const FloatVolume& volume, const std::filesystem::path& path) { write_impl(volume, path); }

}  // namespace covidseg
