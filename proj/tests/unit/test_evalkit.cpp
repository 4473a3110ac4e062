#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "covidseg/core/rng.hpp"
#include "covidseg/ctio/nifti.hpp"
#include "covidseg/evalkit/dice.hpp"
#include "covidseg/evalkit/overlay.hpp"

using namespace covidseg;
namespace fs = std::filesystem;

namespace {

LabelVolume grid(std::initializer_list<std::uint8_t> v) {
  LabelVolume l(1, 8, 8, 0);
  std::copy(v.begin(), v.end(), l.data.begin());
  return l;
}

double brute_dice(const LabelVolume& p, const LabelVolume& g, std::uint8_t c) {
  double both = 0, np = 0, ng = 0;
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    both += p.data[i] == c && g.data[i] == c;
    np += p.data[i] == c;
    ng += g.data[i] == c;
  }
  return np + ng == 0 ? 1.0 : 2 * both / (np + ng);
}

}  // namespace

TEST(Dice, HandExample) {
  // Prediction {0,1,2}, truth {1,2,3} for class 3 marked voxels.
  LabelVolume p(1, 8, 8, 0), g(1, 8, 8, 0);
  p.data[0] = p.data[1] = p.data[2] = 3;
  g.data[1] = g.data[2] = g.data[3] = 3;
  EXPECT_NEAR(dice_score(p, g, 3), 2.0 / 3.0, 1e-4);
  EXPECT_EQ(dice_score(p, p, 3), 1.0);
  EXPECT_EQ(dice_score(p, g, 2), 1.0);  // empty in both
  LabelVolume other(1, 8, 7, 0);
  EXPECT_THROW(dice_score(p, other, 3), std::invalid_argument);
}

TEST(Dice, SymmetricAndMatchesBruteForce) {
  Rng rng(4);
  for (int t = 0; t < 30; ++t) {
    LabelVolume p(2, 8, 8), g(2, 8, 8);
    for (auto& v : p.data) v = static_cast<std::uint8_t>(rng.below(4));
    for (auto& v : g.data) v = static_cast<std::uint8_t>(rng.below(4));
    for (std::uint8_t c = 0; c < 4; ++c) {
      EXPECT_EQ(dice_score(p, g, c), dice_score(g, p, c));
      EXPECT_NEAR(dice_score(p, g, c), brute_dice(p, g, c), 1e-15);
    }
  }
}

TEST(Dice, AddingCorrectVoxelsNeverLowersScore) {
  Rng rng(5);
  LabelVolume g(1, 8, 8), p(1, 8, 8, 0);
  for (auto& v : g.data) v = static_cast<std::uint8_t>(rng.below(2) * 3);
  double prev = dice_score(p, g, 3);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (g.data[i] != 3) continue;
    p.data[i] = 3;
    const double d = dice_score(p, g, 3);
    EXPECT_GE(d, prev);
    prev = d;
  }
  EXPECT_EQ(prev, 1.0);
}

TEST(Evaluate, PerCaseThenMeanAndFoldEcho) {
  LabelVolume g(1, 8, 8, 0), p1(1, 8, 8, 0), p2(1, 8, 8, 0);
  for (int i = 0; i < 10; ++i) g.data[i] = 2;
  for (int i = 0; i < 10; ++i) p1.data[i] = 2;  // 1.0
  for (int i = 0; i < 4; ++i) p2.data[i] = 2;   // 2*4/14
  const nlohmann::json fold{{"index", 1}, {"k", 2}};
  const DiceReport r = evaluate_volumes({"a", "b"}, {p1, p2}, {g, g}, default_eval_classes(), fold);
  ASSERT_EQ(r.cases.size(), 2u);
  EXPECT_EQ(r.cases[0].dice.at("normal"), 1.0);
  EXPECT_NEAR(r.mean.at("normal"), (1.0 + 8.0 / 14.0) / 2.0, 1e-15);
  EXPECT_EQ(r.mean.at("infection"), 1.0);
  EXPECT_TRUE(r.cases[1].vacuous.at("infection"));
  const nlohmann::json j = r;
  EXPECT_EQ(j["fold"], fold);
  EXPECT_EQ(j["aggregation"], "per-case-then-mean");
  EXPECT_EQ(j["cases"][1]["id"], "b");

  EXPECT_THROW(evaluate_volumes({"a"}, {p1, p2}, {g, g}, default_eval_classes()), std::invalid_argument);
  LabelVolume small(1, 8, 9, 0);
  try {
    evaluate_volumes({"a", "odd"}, {p1, small}, {g, g}, default_eval_classes());
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("odd"), std::string::npos);
  }
}

TEST(Evaluate, AggregationIsMeanOfMeans) {
  DiceReport a, b;
  a.mean = {{"normal", 0.9}, {"infection", 0.5}};
  b.mean = {{"normal", 0.5}, {"infection", 0.9}};
  const auto m = aggregate_means({a, b});
  EXPECT_NEAR(m.at("normal"), 0.7, 1e-15);
  EXPECT_NEAR(m.at("infection"), 0.7, 1e-15);
}

TEST(Evaluate, FromFilesRejectsUnpaired) {
  const fs::path dir = fs::temp_directory_path() / "covidseg_eval_test";
  fs::create_directories(dir);
  LabelVolume g(2, 8, 8, 1);
  g.data[3] = 3;
  write_nifti(g, dir / "g.nii");
  const DiceReport r = evaluate({{"x", dir / "g.nii", dir / "g.nii"}});
  EXPECT_EQ(r.mean.at("infection"), 1.0);
  EXPECT_THROW(evaluate({{"x", dir / "g.nii", ""}}), std::invalid_argument);
}

TEST(Overlay, BlendAndFileCounts) {
  CtVolume ct(3, 8, 8, static_cast<std::int16_t>(-550));
  ct.spacing = {2.0, 1.0, 1.0};
  LabelVolume lab(3, 8, 8, 0);
  lab.at(1, 2, 3) = 2;
  lab.at(1, 2, 4) = 3;
  const RgbImage img = overlay_image(ct, lab, OverlayPlane::Axial, 1);
  auto px = [&](std::size_t y, std::size_t x) {
    const std::size_t o = (y * img.width + x) * 3;
    return std::array<int, 3>{img.pixels[o], img.pixels[o + 1], img.pixels[o + 2]};
  };
  // HU -550 maps to mid-gray 128 (127.5 rounded).
  EXPECT_EQ(px(0, 0), (std::array<int, 3>{128, 128, 128}));
  EXPECT_EQ(px(2, 3), (std::array<int, 3>{64, 192, 64}));
  EXPECT_EQ(px(2, 4), (std::array<int, 3>{192, 64, 64}));

  const RgbImage cor = overlay_image(ct, lab, OverlayPlane::Coronal, 2);
  EXPECT_EQ(cor.height, 6u);
  EXPECT_EQ(cor.width, 8u);

  const fs::path dir = fs::temp_directory_path() / "covidseg_overlay_test";
  fs::remove_all(dir);
  EXPECT_EQ(render_overlay(ct, lab, dir / "ax", OverlayPlane::Axial).size(), 3u);
  const auto files = render_overlay(ct, lab, dir / "co", OverlayPlane::Coronal);
  EXPECT_EQ(files.size(), 8u);
  std::ifstream in(files[0], std::ios::binary);
  char sig[8];
  in.read(sig, 8);
  EXPECT_EQ(std::string(sig + 1, 3), "PNG");
  EXPECT_THROW(parse_plane("sagittal"), std::invalid_argument);
  EXPECT_THROW(overlay_image(ct, lab, OverlayPlane::Axial, 3), std::out_of_range);
}
