#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "covidseg/ctio/manifest.hpp"
#include "covidseg/ctio/nifti.hpp"
#include "covidseg/phantom/phantom.hpp"

using namespace covidseg;

TEST(Phantom, DeterministicAndLabelledByConstruction) {
  PhantomConfig c;
  c.depth = 8;
  c.height = c.width = 48;
  c.seed = 12;
  const Phantom a = generate_phantom(c), b = generate_phantom(c);
  EXPECT_EQ(a.ct.data, b.ct.data);
  EXPECT_EQ(a.labels.data, b.labels.data);
  EXPECT_TRUE(a.ct.same_grid(8, 48, 48));
  EXPECT_EQ(a.labels.at(0, 0, 0), kClassAir);
  std::size_t counts[4] = {0};
  for (auto v : a.labels.data) counts[v]++;
  for (auto n : counts) EXPECT_GT(n, 0u);

  c.seed = 13;
  EXPECT_NE(generate_phantom(c).ct.data, a.ct.data);
}

TEST(Phantom, IntensitiesFollowClassDistributions) {
  PhantomConfig c;
  c.depth = 6;
  c.height = c.width = 64;
  c.seed = 3;
  const Phantom p = generate_phantom(c);
  double sum[4] = {0}, n[4] = {0};
  for (std::size_t i = 0; i < p.ct.data.size(); ++i) {
    sum[p.labels.data[i]] += p.ct.data[i];
    n[p.labels.data[i]] += 1;
  }
  EXPECT_EQ(sum[0] / n[0], -1000.0);
  EXPECT_NEAR(sum[1] / n[1], 40.0, 3.0);
  EXPECT_NEAR(sum[2] / n[2], -800.0, 5.0);
  EXPECT_GT(sum[3] / n[3], -600.0);
}

TEST(Phantom, InfectionRetryAndBlobFreeMode) {
  PhantomConfig c;
  c.depth = 4;
  c.height = c.width = 32;
  c.blob_count_min = 0;
  c.blob_count_max = 1;
  for (std::uint64_t s = 0; s < 10; ++s) {
    c.seed = s;
    const Phantom p = generate_phantom(c);
    EXPECT_GT(std::count(p.labels.data.begin(), p.labels.data.end(), kClassInfection), 0) << s;
    EXPECT_EQ((p.effective_seed - s) % (std::uint64_t{1} << 32), 0u);
  }
  c.blob_count_max = 0;
  const Phantom clean = generate_phantom(c);
  EXPECT_EQ(std::count(clean.labels.data.begin(), clean.labels.data.end(), kClassInfection), 0);
}

TEST(Phantom, RejectsInvalidConfig) {
  PhantomConfig c;
  c.height = 40;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lung.sd = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.blob_count_min = 3;
  c.blob_count_max = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Phantom, DatasetWritesReadableManifest) {
  const auto dir = std::filesystem::temp_directory_path() / "covidseg_phantom_test";
  std::filesystem::remove_all(dir);
  PhantomConfig c;
  c.depth = 2;
  c.height = c.width = 32;
  const auto path = generate_dataset(3, 50, dir, c);
  const Manifest m = load_manifest(path);
  ASSERT_EQ(m.cases.size(), 3u);
  c.seed = 51;
  EXPECT_EQ(read_labels(m.cases[1].label_path).data, generate_phantom(c).labels.data);
  EXPECT_EQ(read_ct(m.cases[1].ct_path).data, generate_phantom(c).ct.data);
}
