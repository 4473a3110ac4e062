#include "covidseg/segnet/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace covidseg {

Var mixed_pool(Var input, const PoolAlpha& alpha_site) {
  const Tensor& x = input.value();
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw std::invalid_argument("mixed_pool: spatial extents must be even, got " + shape_string(x.shape()));
  }
  double alpha = alpha_site.fixed;
  if (alpha_site.raw) {
    const Tensor& raw = alpha_site.raw->value();
    if (raw.size() != 1) throw std::invalid_argument("mixed_pool: alpha_raw must be a scalar");
    alpha = 1.0 / (1.0 + std::exp(-raw[0]));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
  Tensor out({x.dim(0), x.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.size());
  // max - avg per output, needed for d/d(alpha).
  std::vector<double> spread(alpha_site.raw ? out.size() : 0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t i = (p * h + 2 * oy) * w + 2 * ox;
        const std::size_t window[4] = {i, i + 1, i + w, i + w + 1};
        std::size_t best = i;
        for (std::size_t k : window)
          if (x[k] > x[best]) best = k;
        const double mx = x[best];
        const double av = 0.25 * (x[i] + x[i + 1] + x[i + w] + x[i + w + 1]);
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = alpha * mx + (1.0 - alpha) * av;
        argmax[o] = best;
        if (!spread.empty()) spread[o] = mx - av;
      }
    }
  }
  std::vector<Var> inputs{input};
  if (alpha_site.raw) inputs.push_back(*alpha_site.raw);
  return input.graph().record(
      std::move(out), std::move(inputs),
      [alpha, planes, h, w, argmax = std::move(argmax), spread = std::move(spread)](std::span<const double> gout,
                                                                                     GradSlots grads) {
        if (grads[0]) {
          auto& gi = *grads[0];
          const std::size_t oh = h / 2, ow = w / 2;
          for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t oy = 0; oy < oh; ++oy)
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::size_t o = (p * oh + oy) * ow + ox;
                const std::size_t i = (p * h + 2 * oy) * w + 2 * ox;
                const double ga = 0.25 * (1.0 - alpha) * gout[o];
                gi[i] += ga;
                gi[i + 1] += ga;
                gi[i + w] += ga;
                gi[i + w + 1] += ga;
                gi[argmax[o]] += alpha * gout[o];
              }
        }
        if (grads.size() > 1 && grads[1]) {
          double s = 0.0;
          for (std::size_t o = 0; o < gout.size(); ++o) s += gout[o] * spread[o];
          (*grads[1])[0] += s * alpha * (1.0 - alpha);
        }
      });
}

Var conv_relu(Var input, const ConvParams& conv, Conv2dOptions options) {
  return relu(conv2d(input, conv.kernel, conv.bias, options));
}

Var dilated_block(Var input, std::span<const ConvParams> branches, std::span<const int> rates) {
  if (branches.size() != rates.size() || rates.empty()) {
    throw std::invalid_argument("dilated_block: need one branch per dilation rate (" + std::to_string(branches.size()) +
                                " branches, " + std::to_string(rates.size()) + " rates)");
  }
  const std::size_t width = branches[0].kernel.value().dim(0);
  std::vector<Var> outputs;
  outputs.reserve(rates.size());
  for (std::size_t i = 0; i < rates.size(); ++i) {
    const Tensor& k = branches[i].kernel.value();
    if (k.dim(0) != width || k.dim(2) != 3 || k.dim(3) != 3) {
      throw std::invalid_argument("dilated_block: branch kernels must be 3x3 with equal widths, branch " +
                                  std::to_string(i) + " has " + shape_string(k.shape()));
    }
    outputs.push_back(conv_relu(input, branches[i], {.stride = 1, .padding = rates[i], .dilation = rates[i]}));
  }
  return outputs.size() == 1 ? outputs[0] : concat_channels(outputs);
}

Var dense_pool_connect(std::span<const Var> encoder_outputs, Var standard_path,
                       std::span<const std::vector<PoolAlpha>> hops) {
  const std::size_t levels = encoder_outputs.size();
  if (hops.size() != levels) throw std::invalid_argument("dense_pool_connect: one hop list per encoder level required");
  const Shape& target = standard_path.shape();
  std::vector<Var> parts;
  parts.reserve(levels + 1);
  for (std::size_t l = 0; l < levels; ++l) {
    if (hops[l].size() != levels - l) {
      throw std::invalid_argument("dense_pool_connect: level " + std::to_string(l + 1) + " needs " +
                                  std::to_string(levels - l) + " pooling hops, got " + std::to_string(hops[l].size()));
    }
    Var x = encoder_outputs[l];
    for (const PoolAlpha& hop : hops[l]) x = mixed_pool(x, hop);
    const Shape& s = x.shape();
    if (s[0] != target[0] || s[2] != target[2] || s[3] != target[3]) {
      throw std::invalid_argument("dense_pool_connect: level " + std::to_string(l + 1) + " pooled to " + shape_string(s) +
                                  " but the bottleneck path is " + shape_string(target));
    }
    parts.push_back(x);
  }
  parts.push_back(standard_path);
  return concat_channels(parts);
}

}  // namespace covidseg
