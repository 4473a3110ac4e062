#pragma once

#include <string>
#include <vector>

#include "covidseg/core/ops.hpp"
#include "covidseg/segnet/model.hpp"

namespace oracle {

// Plain U-Net written directly from the primitives: two 3x3 conv+ReLU per level,
// max pooling, nearest upsampling, skip concatenation, 1x1 head and softmax.
inline covidseg::Tensor reference_unet(const covidseg::Model& m, const covidseg::Tensor& x) {
  using namespace covidseg;
  Graph g;
  auto p = [&](const std::string& n) { return g.view(m.params.at(n)); };
  auto block = [&](Var v, const std::string& n) {
    return relu(conv2d(v, p(n + ".kernel"), p(n + ".bias"), {.stride = 1, .padding = 1, .dilation = 1}));
  };
  const int depth = m.config.depth;
  Var v = g.view(x);
  std::vector<Var> skips;
  for (int l = 1; l <= depth; ++l) {
    const std::string e = "enc." + std::to_string(l);
    v = block(block(v, e + ".conv1"), e + ".conv2");
    skips.push_back(v);
    v = max_pool2(v);
  }
  v = block(block(v, "bottleneck.conv1"), "bottleneck.conv2");
  for (int l = depth; l >= 1; --l) {
    const std::string d = "dec." + std::to_string(l);
    const Var parts[2] = {upsample_nearest2(v), skips[l - 1]};
    v = block(block(concat_channels(parts), d + ".conv1"), d + ".conv2");
  }
  return softmax_channels(conv2d(v, p("head.kernel"), p("head.bias"))).value();
}

}  // namespace oracle
