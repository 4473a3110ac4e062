#include "covidseg/evalkit/overlay.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <system_error>

#include "covidseg/ctio/preprocess.hpp"

namespace covidseg {

OverlayPlane parse_plane(const std::string& name) {
  if (name == "axial") return OverlayPlane::Axial;
  if (name == "coronal") return OverlayPlane::Coronal;
  throw std::invalid_argument("unknown plane '" + name + "' (expected axial or coronal)");
}

namespace {

void shade(std::uint8_t* px, std::int16_t hu, std::uint8_t label) {
  const double gray = std::round((normalize_hu(hu) + 1.0) * 0.5 * 255.0);
  const double rgb[3] = {gray, gray, gray};
  double tint[3];
  bool blend = true;
  if (label == kClassNormal) {
    tint[0] = 0, tint[1] = 255, tint[2] = 0;
  } else if (label == kClassInfection) {
    tint[0] = 255, tint[1] = 0, tint[2] = 0;
  } else {
    blend = false;
  }
  for (int c = 0; c < 3; ++c) {
    const double v = blend ? 0.5 * rgb[c] + 0.5 * tint[c] : rgb[c];
    px[c] = static_cast<std::uint8_t>(std::lround(v));
  }
}

// Number of coronal image rows so that one row spans sx millimetres.
std::size_t coronal_rows(const CtVolume& ct) {
  const double rows = std::round(static_cast<double>(ct.depth) * ct.spacing[0] / ct.spacing[2]);
  return std::max<std::size_t>(1, static_cast<std::size_t>(rows));
}

}  // namespace

RgbImage overlay_image(const CtVolume& ct, const LabelVolume& labels, OverlayPlane plane, std::size_t index) {
  if (!ct.same_grid(labels)) throw std::invalid_argument("overlay: CT and label grids differ");
  RgbImage img;
  img.width = ct.width;
  if (plane == OverlayPlane::Axial) {
    if (index >= ct.depth) throw std::out_of_range("overlay: axial index out of range");
    img.height = ct.height;
    img.pixels.resize(img.width * img.height * 3);
    for (std::size_t y = 0; y < ct.height; ++y)
      for (std::size_t x = 0; x < ct.width; ++x)
        shade(&img.pixels[(y * img.width + x) * 3], ct.at(index, y, x), labels.at(index, y, x));
  } else {
    if (index >= ct.height) throw std::out_of_range("overlay: coronal index out of range");
    img.height = coronal_rows(ct);
    img.pixels.resize(img.width * img.height * 3);
    // Top row shows the highest slice.
    for (std::size_t r = 0; r < img.height; ++r) {
      const std::size_t z_from_top = std::min(
          ct.depth - 1, static_cast<std::size_t>((static_cast<double>(r) + 0.5) * static_cast<double>(ct.depth) /
                                                 static_cast<double>(img.height)));
      const std::size_t z = ct.depth - 1 - z_from_top;
      for (std::size_t x = 0; x < ct.width; ++x)
        shade(&img.pixels[(r * img.width + x) * 3], ct.at(z, index, x), labels.at(z, index, x));
    }
  }
  return img;
}

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw std::runtime_error("cannot write " + path.string() + ": " + msg);
  }
}

std::vector<std::filesystem::path> render_overlay(const CtVolume& ct, const LabelVolume& labels,
                                                  const std::filesystem::path& out_dir, OverlayPlane plane) {
  if (!ct.same_grid(labels)) throw std::invalid_argument("overlay: CT and label grids differ");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
  const std::size_t count = plane == OverlayPlane::Axial ? ct.depth : ct.height;
  std::vector<std::filesystem::path> written;
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%04zu.png", i);
    written.push_back(out_dir / name);
    write_png(overlay_image(ct, labels, plane, i), written.back());
  }
  return written;
}

}  // namespace covidseg
