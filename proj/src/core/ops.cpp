#include "covidseg/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

#include "covidseg/core/conv_kernels.hpp"

namespace covidseg {

namespace {

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected a 4-D tensor, got " + shape_string(t.shape()));
  }
}

void require_even(const Tensor& t, const char* op) {
  require_rank4(t, op);
  if (t.dim(2) % 2 != 0 || t.dim(3) % 2 != 0) {
    throw std::invalid_argument(std::string(op) + ": spatial extents must be even, got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, Conv2dOptions options) {
  const Tensor& x = input.value();
  const Tensor& w = kernel.value();
  const Tensor& b = bias.value();
  if (options.stride <= 0) throw std::invalid_argument("conv2d: stride must be positive, got " + std::to_string(options.stride));
  if (options.dilation <= 0) {
    throw std::invalid_argument("conv2d: dilation must be positive, got " + std::to_string(options.dilation));
  }
  if (options.padding < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
  if (x.rank() != 4 || w.rank() != 4 || w.dim(1) != x.dim(1)) {
    throw std::invalid_argument("conv2d: input " + shape_string(x.shape()) + " incompatible with kernel " +
                                shape_string(w.shape()));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw std::invalid_argument("conv2d: bias " + shape_string(b.shape()) + " does not match kernel " +
                                shape_string(w.shape()));
  }
  kernels::ConvGeometry g;
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  g.stride = static_cast<std::size_t>(options.stride);
  g.padding = static_cast<std::size_t>(options.padding);
  g.dilation = static_cast<std::size_t>(options.dilation);
  const std::size_t eff_h = (g.kh - 1) * g.dilation + 1;
  const std::size_t eff_w = (g.kw - 1) * g.dilation + 1;
  if (g.h + 2 * g.padding < eff_h || g.w + 2 * g.padding < eff_w) {
    throw std::invalid_argument("conv2d: padded input " + shape_string(x.shape()) + " smaller than dilated kernel " +
                                shape_string(w.shape()) + " at dilation " + std::to_string(g.dilation));
  }
  g.oh = (g.h + 2 * g.padding - eff_h) / g.stride + 1;
  g.ow = (g.w + 2 * g.padding - eff_w) / g.stride + 1;

  Tensor out({g.n, g.cout, g.oh, g.ow});
  kernels::conv2d_forward(g, x.data().data(), w.data().data(), b.data().data(), out.data().data());

  return input.graph().record(std::move(out), {input, kernel, bias},
                              [g, input, kernel](std::span<const double> gout, GradSlots grads) {
                                kernels::conv2d_backward(g, input.value().data().data(), kernel.value().data().data(),
                                                         gout.data(), grads[0] ? grads[0]->data() : nullptr,
                                                         grads[1] ? grads[1]->data() : nullptr,
                                                         grads[2] ? grads[2]->data() : nullptr);
                              });
}

Var max_pool2(Var input) {
  const Tensor& x = input.value();
  require_even(x, "max_pool2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
  Tensor out({x.dim(0), x.dim(1), oh, ow});
  // Flat input index of the winning element per output.
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (p * h + 2 * oy) * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (p * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return input.graph().record(std::move(out), {input},
                              [argmax = std::move(argmax)](std::span<const double> gout, GradSlots grads) {
                                auto& gi = *grads[0];
                                for (std::size_t o = 0; o < gout.size(); ++o) gi[argmax[o]] += gout[o];
                              });
}

Var avg_pool2(Var input) {
  const Tensor& x = input.value();
  require_even(x, "avg_pool2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
  Tensor out({x.dim(0), x.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t i = (p * h + 2 * oy) * w + 2 * ox;
        out[(p * oh + oy) * ow + ox] = 0.25 * (x[i] + x[i + 1] + x[i + w] + x[i + w + 1]);
      }
  return input.graph().record(std::move(out), {input},
                              [planes, h, w](std::span<const double> gout, GradSlots grads) {
                                auto& gi = *grads[0];
                                const std::size_t oh = h / 2, ow = w / 2;
                                for (std::size_t p = 0; p < planes; ++p)
                                  for (std::size_t oy = 0; oy < oh; ++oy)
                                    for (std::size_t ox = 0; ox < ow; ++ox) {
                                      const double g = 0.25 * gout[(p * oh + oy) * ow + ox];
                                      const std::size_t i = (p * h + 2 * oy) * w + 2 * ox;
                                      gi[i] += g;
                                      gi[i + 1] += g;
                                      gi[i + w] += g;
                                      gi[i + w + 1] += g;
                                    }
                              });
}

Var upsample_nearest2(Var input) {
  const Tensor& x = input.value();
  require_rank4(x, "upsample_nearest2");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) out[(p * 2 * h + y) * 2 * w + xx] = x[(p * h + y / 2) * w + xx / 2];
  return input.graph().record(std::move(out), {input},
                              [planes, h, w](std::span<const double> gout, GradSlots grads) {
                                auto& gi = *grads[0];
                                for (std::size_t p = 0; p < planes; ++p)
                                  for (std::size_t y = 0; y < 2 * h; ++y)
                                    for (std::size_t xx = 0; xx < 2 * w; ++xx)
                                      gi[(p * h + y / 2) * w + xx / 2] += gout[(p * 2 * h + y) * 2 * w + xx];
                              });
}

Var concat_channels(std::span<const Var> inputs) {
  if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Tensor& first = inputs[0].value();
  require_rank4(first, "concat_channels");
  std::size_t total = 0;
  std::vector<std::size_t> channels;
  for (const Var& v : inputs) {
    const Tensor& t = v.value();
    require_rank4(t, "concat_channels");
    if (t.dim(0) != first.dim(0) || t.dim(2) != first.dim(2) || t.dim(3) != first.dim(3)) {
      throw std::invalid_argument("concat_channels: batch/spatial mismatch " + shape_string(first.shape()) + " vs " +
                                  shape_string(t.shape()));
    }
    channels.push_back(t.dim(1));
    total += t.dim(1);
  }
  const std::size_t n = first.dim(0), plane = first.dim(2) * first.dim(3);
  Tensor out({n, total, first.dim(2), first.dim(3)});
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor& t = inputs[i].value();
      std::memcpy(&out[(b * total + offset) * plane], &t[b * channels[i] * plane], channels[i] * plane * sizeof(double));
      offset += channels[i];
    }
  }
  return inputs[0].graph().record(
      std::move(out), std::vector<Var>(inputs.begin(), inputs.end()),
      [n, plane, total, channels](std::span<const double> gout, GradSlots grads) {
        for (std::size_t b = 0; b < n; ++b) {
          std::size_t offset = 0;
          for (std::size_t i = 0; i < channels.size(); ++i) {
            if (grads[i]) {
              double* dst = grads[i]->data() + b * channels[i] * plane;
              const double* src = gout.data() + (b * total + offset) * plane;
              for (std::size_t k = 0; k < channels[i] * plane; ++k) dst[k] += src[k];
            }
            offset += channels[i];
          }
        }
      });
}

Var relu(Var input) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return input.graph().record(std::move(out), {input}, [input](std::span<const double> gout, GradSlots grads) {
    const Tensor& xv = input.value();
    auto& gi = *grads[0];
    for (std::size_t i = 0; i < gout.size(); ++i)
      if (xv[i] > 0.0) gi[i] += gout[i];
  });
}

Var softmax_channels(Var input) {
  const Tensor& x = input.value();
  require_rank4(x, "softmax_channels");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor out(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    const double* xb = &x[b * c * plane];
    double* ob = &out[b * c * plane];
    for (std::size_t p = 0; p < plane; ++p) {
      double mx = xb[p];
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, xb[k * plane + p]);
      double denom = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double e = std::exp(xb[k * plane + p] - mx);
        ob[k * plane + p] = e;
        denom += e;
      }
      const double inv = 1.0 / denom;
      for (std::size_t k = 0; k < c; ++k) ob[k * plane + p] *= inv;
    }
  }
  Graph& graph = input.graph();
  const std::size_t self = graph.size();
  return graph.record(std::move(out), {input}, [&graph, self, n, c, plane](std::span<const double> gout, GradSlots grads) {
    const Tensor& y = graph.value(self);
    auto& gi = *grads[0];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = b * c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0;
        for (std::size_t k = 0; k < c; ++k) dot += gout[base + k * plane + p] * y[base + k * plane + p];
        for (std::size_t k = 0; k < c; ++k) {
          const std::size_t i = base + k * plane + p;
          gi[i] += y[i] * (gout[i] - dot);
        }
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [](std::span<const double> gout, GradSlots grads) {
    for (auto* g : grads)
      if (g)
        for (std::size_t i = 0; i < gout.size(); ++i) (*g)[i] += gout[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.graph().record(std::move(out), {a, b}, [a, b](std::span<const double> gout, GradSlots grads) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (grads[0])
      for (std::size_t i = 0; i < gout.size(); ++i) (*grads[0])[i] += gout[i] * bv[i];
    if (grads[1])
      for (std::size_t i = 0; i < gout.size(); ++i) (*grads[1])[i] += gout[i] * av[i];
  });
}

Var sum(Var input) {
  double s = 0.0;
  for (double v : input.value().data()) s += v;
  return input.graph().record(Tensor::scalar(s), {input}, [](std::span<const double> gout, GradSlots grads) {
    for (double& g : *grads[0]) g += gout[0];
  });
}

Var weighted_sum(Var input, const Tensor& weights) {
  require_same_shape(input.value(), weights, "weighted_sum");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += input.value()[i] * weights[i];
  return input.graph().record(Tensor::scalar(s), {input}, [weights](std::span<const double> gout, GradSlots grads) {
    auto& gi = *grads[0];
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[0] * weights[i];
  });
}

}  // namespace covidseg
