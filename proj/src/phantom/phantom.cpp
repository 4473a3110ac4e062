#include "covidseg/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "covidseg/core/rng.hpp"
#include "covidseg/ctio/manifest.hpp"
#include "covidseg/ctio/nifti.hpp"
#include "covidseg/ctio/preprocess.hpp"

namespace covidseg {

void PhantomConfig::validate() const {
  if (depth < 1 || height < 8 || width < 8) throw std::invalid_argument("phantom: size must be Z >= 1, H, W >= 8");
  if (size_multiple == 0 || height % size_multiple != 0 || width % size_multiple != 0) {
    throw std::invalid_argument("phantom: H and W (" + std::to_string(height) + "x" + std::to_string(width) +
                                ") must be divisible by " + std::to_string(size_multiple));
  }
  for (const auto* d : {&body, &lung, &ggo, &consolidation})
    if (d->sd < 0.0) throw std::invalid_argument("phantom: HU standard deviations must be >= 0");
  if (blob_count_min < 0 || blob_count_max < blob_count_min) throw std::invalid_argument("phantom: bad blob count range");
  if (blob_radius_min <= 0.0 || blob_radius_max < blob_radius_min) {
    throw std::invalid_argument("phantom: bad blob radius range");
  }
  for (double s : spacing)
    if (!(s > 0.0)) throw std::invalid_argument("phantom: spacing must be positive");
}

namespace {

struct Ellipsoid {
  double cz, cy, cx, rz, ry, rx;
  bool contains(double z, double y, double x) const {
    const double dz = (z - cz) / rz, dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dz * dz + dy * dy + dx * dx <= 1.0;
  }
};

struct Blob {
  double cz, cy, cx, r;
  bool consolidation;
};

Phantom draw(const PhantomConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  const double Z = static_cast<double>(c.depth), H = static_cast<double>(c.height), W = static_cast<double>(c.width);
  const double cz = (Z - 1) / 2, cy = (H - 1) / 2, cx = (W - 1) / 2;

  const Ellipsoid body{cz, cy, cx, Z * rng.uniform(0.9, 1.2), H * rng.uniform(0.32, 0.40), W * rng.uniform(0.40, 0.46)};
  Ellipsoid lungs[2];
  for (int side = 0; side < 2; ++side) {
    const double offset = body.rx * rng.uniform(0.42, 0.52);
    lungs[side] = Ellipsoid{cz + Z * rng.uniform(-0.05, 0.05), cy - body.ry * rng.uniform(0.0, 0.1),
                            side == 0 ? cx - offset : cx + offset, Z * rng.uniform(0.35, 0.45),
                            body.ry * rng.uniform(0.55, 0.70), body.rx * rng.uniform(0.30, 0.38)};
  }

  std::vector<Blob> blobs;
  for (const Ellipsoid& lung : lungs) {
    const int count = c.blob_count_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.blob_count_max - c.blob_count_min + 1)));
    for (int b = 0; b < count; ++b) {
      double u, v, w;
      do {
        u = rng.uniform(-1.0, 1.0);
        v = rng.uniform(-1.0, 1.0);
        w = rng.uniform(-1.0, 1.0);
      } while (u * u + v * v + w * w > 1.0);
      const double r = rng.uniform(c.blob_radius_min, c.blob_radius_max);
      const bool consolidation = rng.uniform() < 0.5;
      blobs.push_back({lung.cz + u * lung.rz, lung.cy + v * lung.ry, lung.cx + w * lung.rx, r, consolidation});
    }
  }

  Phantom p;
  p.effective_seed = seed;
  p.ct = CtVolume(c.depth, c.height, c.width);
  p.labels = LabelVolume(c.depth, c.height, c.width);
  p.ct.spacing = p.labels.spacing = c.spacing;
  for (std::size_t z = 0; z < c.depth; ++z) {
    for (std::size_t y = 0; y < c.height; ++y) {
      for (std::size_t x = 0; x < c.width; ++x) {
        const double fz = static_cast<double>(z), fy = static_cast<double>(y), fx = static_cast<double>(x);
        std::uint8_t label = kClassAir;
        const HuDistribution* dist = nullptr;
        if (body.contains(fz, fy, fx)) {
          label = kClassBody;
          dist = &c.body;
          if (lungs[0].contains(fz, fy, fx) || lungs[1].contains(fz, fy, fx)) {
            label = kClassNormal;
            dist = &c.lung;
            for (const Blob& b : blobs) {
              const double dz = fz - b.cz, dy = fy - b.cy, dx = fx - b.cx;
              if (dz * dz + dy * dy + dx * dx <= b.r * b.r) {
                label = kClassInfection;
                dist = b.consolidation ? &c.consolidation : &c.ggo;
                break;
              }
            }
          }
        }
        double hu = dist ? rng.normal(dist->mean, dist->sd) : c.air_hu;
        hu = std::clamp(std::round(hu), kHuWindowLow, kHuWindowHigh);
        p.ct.at(z, y, x) = static_cast<std::int16_t>(hu);
        p.labels.at(z, y, x) = label;
      }
    }
  }
  return p;
}

}  // namespace

Phantom generate_phantom(const PhantomConfig& config) {
  config.validate();
  for (std::uint64_t k = 0;; ++k) {
    Phantom p = draw(config, config.seed + (k << 32));
    if (config.blob_count_max == 0) return p;
    if (std::find(p.labels.data.begin(), p.labels.data.end(), kClassInfection) != p.labels.data.end()) return p;
    if (k > 1000) throw std::runtime_error("phantom: no infection voxel after 1000 retries; blob settings too small");
  }
}

std::filesystem::path generate_dataset(int count, std::uint64_t base_seed, const std::filesystem::path& out_dir,
                                       PhantomConfig config) {
  if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
  std::filesystem::create_directories(out_dir);
  Manifest manifest;
  for (int i = 0; i < count; ++i) {
    config.seed = base_seed + static_cast<std::uint64_t>(i);
    const Phantom p = generate_phantom(config);
    char stem[32];
    std::snprintf(stem, sizeof stem, "case_%03d", i);
    CaseEntry entry{stem, out_dir / (std::string(stem) + "_ct.nii"), out_dir / (std::string(stem) + "_label.nii")};
    write_nifti(p.ct, entry.ct_path);
    write_nifti(p.labels, entry.label_path);
    manifest.cases.push_back(std::move(entry));
  }
  const auto path = out_dir / "manifest.json";
  save_manifest(manifest, path);
  return path;
}

void to_json(nlohmann::json& j, const PhantomConfig& c) {
  auto dist = [](const HuDistribution& d) { return nlohmann::json{{"mean", d.mean}, {"sd", d.sd}}; };
  j = nlohmann::json{{"size", {c.depth, c.height, c.width}},
                     {"spacing", c.spacing},
                     {"body", dist(c.body)},
                     {"lung", dist(c.lung)},
                     {"ggo", dist(c.ggo)},
                     {"consolidation", dist(c.consolidation)},
                     {"air_hu", c.air_hu},
                     {"blob_count", {c.blob_count_min, c.blob_count_max}},
                     {"blob_radius", {c.blob_radius_min, c.blob_radius_max}},
                     {"size_multiple", c.size_multiple},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PhantomConfig& c) {
  auto dist = [](const nlohmann::json& d, HuDistribution& out) {
    out.mean = d.value("mean", out.mean);
    out.sd = d.value("sd", out.sd);
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "size") {
      c.depth = (*it)[0].get<std::size_t>();
      c.height = (*it)[1].get<std::size_t>();
      c.width = (*it)[2].get<std::size_t>();
    } else if (k == "spacing") c.spacing = it->get<std::array<double, 3>>();
    else if (k == "body") dist(*it, c.body);
    else if (k == "lung") dist(*it, c.lung);
    else if (k == "ggo") dist(*it, c.ggo);
    else if (k == "consolidation") dist(*it, c.consolidation);
    else if (k == "air_hu") c.air_hu = it->get<double>();
    else if (k == "blob_count") {
      c.blob_count_min = (*it)[0].get<int>();
      c.blob_count_max = (*it)[1].get<int>();
    } else if (k == "blob_radius") {
      c.blob_radius_min = (*it)[0].get<double>();
      c.blob_radius_max = (*it)[1].get<double>();
    } else if (k == "size_multiple") c.size_multiple = it->get<std::size_t>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else throw std::invalid_argument("invalid phantom config: unknown key '" + k + "'");
  }
}

}  // namespace covidseg
