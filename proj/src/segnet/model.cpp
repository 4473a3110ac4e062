#include "covidseg/segnet/model.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>
#include <unordered_map>

#include "covidseg/core/rng.hpp"
#include "covidseg/segnet/layers.hpp"

namespace covidseg {

namespace {

std::string level_name(const char* prefix, int level) { return std::string(prefix) + "." + std::to_string(level); }

void add_conv(ParamStore& store, Rng& rng, const std::string& name, int cin, int cout, int k) {
  const auto ci = static_cast<std::size_t>(cin), co = static_cast<std::size_t>(cout), ks = static_cast<std::size_t>(k);
  Tensor kernel({co, ci, ks, ks});
  const double sd = std::sqrt(2.0 / static_cast<double>(ci * ks * ks));
  for (double& v : kernel.data()) v = rng.normal(0.0, sd);
  kernel.set_requires_grad(true);
  Tensor bias({co}, 0.0);
  bias.set_requires_grad(true);
  store.add(name + ".kernel", std::move(kernel));
  store.add(name + ".bias", std::move(bias));
}

void add_alpha(ParamStore& store, const std::string& name) {
  Tensor raw = Tensor::scalar(0.0);
  raw.set_requires_grad(true);
  store.add(name, std::move(raw));
}

bool learnable_alpha(const ModelConfig& c) { return c.uses_mixed_pooling() && c.mixed_pool_alpha_learnable; }

std::string hop_name(int level, int hop) {
  return level_name("dense", level) + ".hop" + std::to_string(hop) + ".alpha_raw";
}

Var run(const ModelConfig& c, const ParamLookup& param, Var batch) {
  const Tensor& x0 = batch.value();
  if (x0.rank() != 4 || x0.dim(1) != static_cast<std::size_t>(c.in_channels)) {
    throw std::invalid_argument("forward: expected (N," + std::to_string(c.in_channels) + ",S,S) input, got " +
                                shape_string(x0.shape()));
  }
  const std::size_t unit = std::size_t{1} << c.depth;
  if (x0.dim(2) != x0.dim(3) || x0.dim(2) % unit != 0) {
    throw std::invalid_argument("forward: spatial size " + shape_string(x0.shape()) +
                                " must be square and divisible by 2^depth = " + std::to_string(unit));
  }
  auto conv = [&](const std::string& name) { return ConvParams{param(name + ".kernel"), param(name + ".bias")}; };
  auto pool_site = [&](const std::string& name) {
    return learnable_alpha(c) ? PoolAlpha{param(name), 0.0} : PoolAlpha{std::nullopt, 0.5};
  };
  const Conv2dOptions same3{.stride = 1, .padding = 1, .dilation = 1};

  std::vector<Var> skips;
  Var x = batch;
  for (int l = 1; l <= c.depth; ++l) {
    const std::string enc = level_name("enc", l);
    x = conv_relu(x, conv(enc + ".conv1"), same3);
    if (c.has_dilated_block(l)) {
      std::vector<ConvParams> branches;
      for (int r : c.dilation_rates) branches.push_back(conv(enc + ".dilated.r" + std::to_string(r)));
      x = dilated_block(x, branches, c.dilation_rates);
    } else {
      x = conv_relu(x, conv(enc + ".conv2"), same3);
    }
    skips.push_back(x);
    x = c.uses_mixed_pooling() ? mixed_pool(x, pool_site(level_name("pool", l) + ".alpha_raw")) : max_pool2(x);
  }

  if (c.uses_dense_pooling()) {
    std::vector<std::vector<PoolAlpha>> hops(static_cast<std::size_t>(c.depth));
    for (int l = 1; l <= c.depth; ++l)
      for (int j = 1; j <= c.depth - l + 1; ++j) hops[l - 1].push_back(pool_site(hop_name(l, j)));
    x = dense_pool_connect(skips, x, hops);
  }

  x = conv_relu(x, conv("bottleneck.conv1"), same3);
  x = conv_relu(x, conv("bottleneck.conv2"), same3);

  for (int l = c.depth; l >= 1; --l) {
    const std::string dec = level_name("dec", l);
    const Var parts[2] = {upsample_nearest2(x), skips[l - 1]};
    x = concat_channels(parts);
    x = conv_relu(x, conv(dec + ".conv1"), same3);
    x = conv_relu(x, conv(dec + ".conv2"), same3);
  }
  const ConvParams head = conv("head");
  return softmax_channels(conv2d(x, head.kernel, head.bias, {}));
}

}  // namespace

Model build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model{config, seed, {}};
  ParamStore& store = model.params;
  Rng rng(seed);
  const ModelConfig& c = config;
  const int rates = static_cast<int>(c.dilation_rates.size());

  for (int l = 1; l <= c.depth; ++l) {
    const std::string enc = level_name("enc", l);
    const int cin = l == 1 ? c.in_channels : c.encoder_width(l - 1);
    add_conv(store, rng, enc + ".conv1", cin, c.level_width(l), 3);
    if (c.has_dilated_block(l)) {
      for (int r : c.dilation_rates) {
        add_conv(store, rng, enc + ".dilated.r" + std::to_string(r), c.level_width(l), c.encoder_width(l) / rates, 3);
      }
    } else {
      add_conv(store, rng, enc + ".conv2", c.level_width(l), c.encoder_width(l), 3);
    }
    if (learnable_alpha(c)) add_alpha(store, level_name("pool", l) + ".alpha_raw");
  }
  if (c.uses_dense_pooling() && learnable_alpha(c)) {
    for (int l = 1; l <= c.depth; ++l)
      for (int j = 1; j <= c.depth - l + 1; ++j) add_alpha(store, hop_name(l, j));
  }
  add_conv(store, rng, "bottleneck.conv1", c.bottleneck_input_width(), c.bottleneck_width(), 3);
  add_conv(store, rng, "bottleneck.conv2", c.bottleneck_width(), c.bottleneck_width(), 3);
  for (int l = c.depth; l >= 1; --l) {
    const std::string dec = level_name("dec", l);
    const int up = l == c.depth ? c.bottleneck_width() : c.level_width(l + 1);
    add_conv(store, rng, dec + ".conv1", up + c.encoder_width(l), c.level_width(l), 3);
    add_conv(store, rng, dec + ".conv2", c.level_width(l), c.level_width(l), 3);
  }
  add_conv(store, rng, "head", c.level_width(1), c.num_classes, 1);
  return model;
}

Var forward_with(const ModelConfig& config, const ParamLookup& param, Var batch) { return run(config, param, batch); }

Var forward(Graph& graph, Model& model, Var batch) {
  std::unordered_map<std::string, Var> bound;
  for (auto& [name, tensor] : model.params) bound.emplace(name, graph.bind(tensor));
  return run(model.config, [&](const std::string& name) { return bound.at(name); }, batch);
}

Tensor predict(const Model& model, const Tensor& batch) {
  Graph graph;
  std::unordered_map<std::string, Var> bound;
  for (const auto& [name, tensor] : model.params) bound.emplace(name, graph.view(tensor));
  const Var out = run(model.config, [&](const std::string& name) { return bound.at(name); }, graph.view(batch));
  return out.value();
}

}  // namespace covidseg
