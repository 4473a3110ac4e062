#pragma once

#include <span>

#include "covidseg/core/graph.hpp"

namespace covidseg {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int dilation = 1;
};

// Cross-correlation (no kernel flip). input (N,Cin,H,W), kernel (Cout,Cin,kh,kw), bias (Cout).
Var conv2d(Var input, Var kernel, Var bias, Conv2dOptions options = {});

// 2x2 windows, stride 2. Odd extents are rejected. Max-pool ties route the
// gradient to the first window element in row-major order.
Var max_pool2(Var input);
Var avg_pool2(Var input);

Var upsample_nearest2(Var input);
Var concat_channels(std::span<const Var> inputs);
Var relu(Var input);
// Per-pixel softmax over the channel axis of a 4-D tensor.
Var softmax_channels(Var input);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var sum(Var input);
// sum(input * weights) with a constant weight tensor of the same shape.
Var weighted_sum(Var input, const Tensor& weights);

}  // namespace covidseg
