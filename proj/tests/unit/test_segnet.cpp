#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "covidseg/core/ops.hpp"
#include "covidseg/core/rng.hpp"
#include "covidseg/segnet/checkpoint.hpp"
#include "covidseg/segnet/layers.hpp"
#include "covidseg/segnet/model.hpp"
#include "reference_unet.hpp"

using namespace covidseg;

namespace {

Tensor random_tensor(Rng& rng, Shape s) {
  Tensor t(std::move(s));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

ModelConfig desk(int size) {
  ModelConfig c;
  c.image_size = size;
  return c;
}

// Independent walk over the layer list of the architecture. A dilated level's
// output width is rounded up so that every rate gets the same branch width.
std::size_t shape_walk_parameter_count(int depth, int base, int in_ch, int classes, int rates,
                                       const std::set<int>& dilated, bool dense, bool unet) {
  auto conv = [](std::size_t ci, std::size_t co, std::size_t k) { return co * ci * k * k + co; };
  std::size_t total = 0;
  std::vector<std::size_t> enc_out;
  std::size_t prev = in_ch;
  for (int l = 1; l <= depth; ++l) {
    const std::size_t width = std::size_t(base) << (l - 1);
    total += conv(prev, width, 3);
    std::size_t out = width;
    if (!unet && dilated.count(l)) {
      const std::size_t branch = (width + rates - 1) / rates;
      out = branch * rates;
      total += rates * conv(width, branch, 3);
    } else {
      total += conv(width, width, 3);
    }
    if (!unet) total += 1;  // pooling alpha
    enc_out.push_back(out);
    prev = out;
  }
  std::size_t bottleneck_in = prev;
  if (!unet && dense) {
    for (int l = 1; l <= depth; ++l) {
      bottleneck_in += enc_out[l - 1];
      total += depth - l + 1;  // hop alphas
    }
  }
  const std::size_t bw = std::size_t(base) << depth;
  total += conv(bottleneck_in, bw, 3) + conv(bw, bw, 3);
  std::size_t up = bw;
  for (int l = depth; l >= 1; --l) {
    const std::size_t width = std::size_t(base) << (l - 1);
    total += conv(up + enc_out[l - 1], width, 3) + conv(width, width, 3);
    up = width;
  }
  total += conv(base, classes, 1);
  return total;
}

}  // namespace

TEST(MixedPool, EndpointsAndMidpoint) {
  Graph g;
  const Var x = g.constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(mixed_pool(x, 1.0).value()[0], 4.0);
  EXPECT_EQ(mixed_pool(x, 0.0).value()[0], 2.5);
  EXPECT_EQ(mixed_pool(x, 0.5).value()[0], 3.25);
  EXPECT_EQ(mixed_pool(x, g.constant(Tensor::scalar(0.0))).value()[0], 3.25);
  EXPECT_THROW(mixed_pool(g.constant(Tensor({1, 1, 3, 2}, 0.0)), 0.5), std::invalid_argument);
}

TEST(MixedPool, BetweenAvgAndMax) {
  Rng rng(1);
  Graph g;
  const Var x = g.constant(random_tensor(rng, {2, 3, 6, 4}));
  const auto mx = max_pool2(x).value(), av = avg_pool2(x).value();
  for (double raw : {-30.0, -1.0, 0.0, 0.7, 30.0}) {
    const Tensor m = mixed_pool(x, g.constant(Tensor::scalar(raw))).value();
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_GE(m[i], std::min(av[i], mx[i]) - 1e-15);
      EXPECT_LE(m[i], std::max(av[i], mx[i]) + 1e-15);
    }
  }
  const Tensor big = mixed_pool(x, g.constant(Tensor::scalar(60.0))).value();
  for (std::size_t i = 0; i < big.size(); ++i) EXPECT_NEAR(big[i], mx[i], 1e-12);
}

TEST(DilatedBlock, ShapesAndDegenerateCase) {
  Rng rng(2);
  Graph g;
  const Var x = g.constant(random_tensor(rng, {1, 1, 8, 8}));
  std::vector<ConvParams> br;
  const int rates[3] = {1, 2, 4};
  for (int i = 0; i < 3; ++i) br.push_back({g.constant(random_tensor(rng, {4, 1, 3, 3})), g.constant(random_tensor(rng, {4}))});
  EXPECT_EQ(dilated_block(x, br, rates).shape(), (Shape{1, 12, 8, 8}));

  const int one[1] = {1};
  const Var y = dilated_block(x, std::span(br).first(1), one);
  const Var z = relu(conv2d(x, br[0].kernel, br[0].bias, {.stride = 1, .padding = 1, .dilation = 1}));
  EXPECT_TRUE(bitwise_equal(y.value().data(), z.value().data()));

  std::vector<ConvParams> uneven = br;
  uneven[2].kernel = g.constant(random_tensor(rng, {3, 1, 3, 3}));
  uneven[2].bias = g.constant(random_tensor(rng, {3}));
  EXPECT_THROW(dilated_block(x, uneven, rates), std::invalid_argument);
}

TEST(DensePoolConnect, ShapesAndChannelCount) {
  Rng rng(3);
  Graph g;
  const std::size_t widths[4] = {8, 16, 33, 66};
  std::vector<Var> enc;
  std::vector<std::vector<PoolAlpha>> hops(4);
  for (std::size_t l = 0; l < 4; ++l) {
    const std::size_t s = 64 >> l;
    enc.push_back(g.constant(random_tensor(rng, {1, widths[l], s, s})));
    for (std::size_t j = 0; j < 4 - l; ++j) hops[l].push_back(PoolAlpha{std::nullopt, 0.5});
  }
  const Var standard = g.constant(random_tensor(rng, {1, 66, 4, 4}));
  const Var out = dense_pool_connect(enc, standard, hops);
  EXPECT_EQ(out.shape(), (Shape{1, 8 + 16 + 33 + 66 + 66, 4, 4}));

  // Level 2 after three mixed pools.
  Var lvl2 = enc[1];
  for (int i = 0; i < 3; ++i) lvl2 = mixed_pool(lvl2, 0.5);
  EXPECT_EQ(lvl2.shape(), (Shape{1, 16, 4, 4}));
  EXPECT_TRUE(bitwise_equal(slice_channels(out.value(), 8, 16).data(), lvl2.value().data()));

  hops[0].pop_back();
  EXPECT_THROW(dense_pool_connect(enc, standard, hops), std::invalid_argument);
}

TEST(ModelConfig, ValidationNamesConstraint) {
  auto expect_reject = [](ModelConfig c, const std::string& fragment) {
    try {
      c.validate();
      FAIL() << "accepted config, expected: " << fragment;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  ModelConfig c;
  c.depth = 1;
  expect_reject(c, "depth");
  c = {};
  c.dilation_rates = {2, 4};
  expect_reject(c, "dilation_rates");
  c = {};
  c.dilation_rates = {1, 4, 2};
  expect_reject(c, "dilation_rates");
  c = {};
  c.dilated_block_levels = {4};
  expect_reject(c, "dilated_block_levels");
  c = {};
  c.num_classes = 1;
  expect_reject(c, "num_classes");
  c = {};
  c.image_size = 40;
  expect_reject(c, "image_size");
  c = {};
  c.ablation_unet = true;
  c.dilated_block_levels = {};
  EXPECT_NO_THROW(c.validate());
}

TEST(ModelConfig, JsonRoundTripAndUnknownKey) {
  ModelConfig c = desk(64);
  c.dilation_rates = {1, 3};
  c.dense_pooling = false;
  nlohmann::json j = c;
  ModelConfig back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  j["widths"] = 3;
  EXPECT_THROW(j.get<ModelConfig>(), std::invalid_argument);
}

TEST(BuildModel, ParameterCountMatchesShapeWalk) {
  const ModelConfig c = desk(64);
  const Model m = build_model(c, 0);
  EXPECT_EQ(m.params.parameter_count(), shape_walk_parameter_count(4, 8, 3, 4, 3, {3, 4}, true, false));
  EXPECT_EQ(m.params.parameter_count(), 638637u);

  ModelConfig u = c;
  u.ablation_unet = true;
  EXPECT_EQ(build_model(u, 0).params.parameter_count(), shape_walk_parameter_count(4, 8, 3, 4, 3, {3, 4}, true, true));

  ModelConfig nd = c;
  nd.dense_pooling = false;
  nd.base_channels = 4;
  nd.depth = 3;
  nd.dilated_block_levels = {2, 3};
  nd.dilation_rates = {1, 2};
  EXPECT_EQ(build_model(nd, 0).params.parameter_count(), shape_walk_parameter_count(3, 4, 3, 4, 2, {2, 3}, false, false));
}

TEST(BuildModel, DeterministicAndAblationNames) {
  const ModelConfig c = desk(64);
  const Model a = build_model(c, 7), b = build_model(c, 7), other = build_model(c, 8);
  ASSERT_EQ(a.params.size(), b.params.size());
  bool differs = false;
  for (auto ia = a.params.begin(), ib = b.params.begin(), io = other.params.begin(); ia != a.params.end(); ++ia, ++ib, ++io) {
    EXPECT_EQ(ia->first, ib->first);
    EXPECT_TRUE(bitwise_equal(ia->second.data(), ib->second.data())) << ia->first;
    differs = differs || !bitwise_equal(ia->second.data(), io->second.data());
  }
  EXPECT_TRUE(differs);
  EXPECT_TRUE(a.params.contains("enc.2.conv1.kernel"));
  EXPECT_TRUE(a.params.contains("pool.3.alpha_raw"));
  EXPECT_TRUE(a.params.contains("enc.3.dilated.r4.kernel"));
  EXPECT_EQ(a.params.at("pool.1.alpha_raw")[0], 0.0);

  ModelConfig u = c;
  u.ablation_unet = true;
  const Model un = build_model(u, 7);
  EXPECT_NE(un.params.parameter_count(), a.params.parameter_count());
  for (const auto& [name, t] : un.params) {
    EXPECT_EQ(name.find("alpha_raw"), std::string::npos) << name;
    EXPECT_EQ(name.find("dilated"), std::string::npos) << name;
  }
}

TEST(BuildModel, KernelInitScale) {
  const Model m = build_model(desk(64), 3);
  const Tensor& k = m.params.at("bottleneck.conv1.kernel");
  double s2 = 0.0;
  for (double v : k.data()) s2 += v * v;
  const double fan_in = static_cast<double>(k.dim(1) * 9);
  EXPECT_NEAR(std::sqrt(s2 / k.size()), std::sqrt(2.0 / fan_in), 0.02 * std::sqrt(2.0 / fan_in));
  for (double v : m.params.at("dec.2.conv1.bias").data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ShapeSoftmaxAndBatchIndependence) {
  Rng rng(4);
  const Model m = build_model(desk(64), 1);
  Tensor one = random_tensor(rng, {1, 3, 64, 64});
  Tensor other = random_tensor(rng, {1, 3, 64, 64});
  Tensor batch({3, 3, 64, 64});
  const std::size_t img = 3 * 64 * 64;
  for (std::size_t i = 0; i < img; ++i) {
    batch[i] = one[i];
    batch[img + i] = other[i];
    batch[2 * img + i] = one[i];
  }
  const Tensor out = predict(m, batch);
  ASSERT_EQ(out.shape(), (Shape{3, 4, 64, 64}));
  const std::size_t plane = 64 * 64, per = 4 * plane;
  for (std::size_t p = 0; p < plane; ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += out[c * plane + p];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  for (std::size_t i = 0; i < per; ++i) EXPECT_EQ(out[i], out[2 * per + i]);
  const Tensor single = predict(m, other);
  for (std::size_t i = 0; i < per; ++i) EXPECT_EQ(out[per + i], single[i]);
}

TEST(Forward, RejectsIndivisibleSize) {
  const Model m = build_model(desk(64), 1);
  EXPECT_THROW(predict(m, Tensor({1, 3, 40, 40}, 0.0)), std::invalid_argument);
  EXPECT_THROW(predict(m, Tensor({1, 2, 64, 64}, 0.0)), std::invalid_argument);
}

TEST(Forward, UnetAblationEqualsReferenceAssembly) {
  ModelConfig c = desk(32);
  c.ablation_unet = true;
  Model m = build_model(c, 9);
  Rng rng(5);
  // Nonzero biases so every conv contributes.
  for (auto& [name, t] : m.params)
    if (name.ends_with(".bias"))
      for (double& v : t.data()) v = rng.normal(0.0, 0.1);
  const Tensor x = random_tensor(rng, {2, 3, 32, 32});
  const Tensor out = predict(m, x);

  EXPECT_TRUE(bitwise_equal(out.data(), oracle::reference_unet(m, x).data()));
}

TEST(Forward, GraphPathMatchesInferencePath) {
  Model m = build_model(desk(32), 2);
  Rng rng(6);
  const Tensor x = random_tensor(rng, {1, 3, 32, 32});
  Graph g;
  const Var y = forward(g, m, g.constant(x));
  EXPECT_TRUE(bitwise_equal(y.value().data(), predict(m, x).data()));
}

TEST(Checkpoint, RoundTripBitwise) {
  const auto dir = std::filesystem::temp_directory_path() / "covidseg_ckpt_test";
  std::filesystem::create_directories(dir);
  const Model m = build_model(desk(32), 4);
  save_checkpoint(dir / "m.ckpt", m, {{"note", "x"}});
  const LoadedCheckpoint back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.metadata["note"], "x");
  EXPECT_EQ(back.model.seed, 4u);
  EXPECT_EQ(nlohmann::json(back.model.config), nlohmann::json(m.config));
  for (auto ia = m.params.begin(), ib = back.model.params.begin(); ia != m.params.end(); ++ia, ++ib) {
    EXPECT_EQ(ia->first, ib->first);
    EXPECT_TRUE(bitwise_equal(ia->second.data(), ib->second.data()));
  }
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "CSEGCKPT");
}

TEST(Checkpoint, RejectsCorruptOrMismatched) {
  const auto dir = std::filesystem::temp_directory_path() / "covidseg_ckpt_test";
  std::filesystem::create_directories(dir);
  const Model m = build_model(desk(32), 4);
  save_checkpoint(dir / "a.ckpt", m);
  {
    std::ofstream out(dir / "bad.ckpt", std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error);
  // Truncated blob.
  const auto size = std::filesystem::file_size(dir / "a.ckpt");
  std::filesystem::copy_file(dir / "a.ckpt", dir / "short.ckpt", std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(dir / "short.ckpt", size - 8);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), std::runtime_error);
}
