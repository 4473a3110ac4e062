#pragma once

#include <optional>
#include <span>
#include <vector>

#include "covidseg/core/ops.hpp"

namespace covidseg {

// Blend weight of one mixed-pooling site: alpha = sigmoid(raw) when a raw
// parameter is present, otherwise the fixed value.
struct PoolAlpha {
  std::optional<Var> raw;
  double fixed = 0.5;
};

// alpha * max_pool2(x) + (1 - alpha) * avg_pool2(x), as one op.
Var mixed_pool(Var input, const PoolAlpha& alpha);
inline Var mixed_pool(Var input, Var alpha_raw) { return mixed_pool(input, PoolAlpha{alpha_raw, 0.0}); }
inline Var mixed_pool(Var input, double alpha) { return mixed_pool(input, PoolAlpha{std::nullopt, alpha}); }

struct ConvParams {
  Var kernel;
  Var bias;
};

Var conv_relu(Var input, const ConvParams& conv, Conv2dOptions options);

// Parallel 3x3 branches, branch i dilated and padded by rates[i], each followed by
// ReLU; outputs concatenated in rate order.
Var dilated_block(Var input, std::span<const ConvParams> branches, std::span<const int> rates);

// Pools encoder output l (1-based, extent H/2^(l-1)) through hops[l-1].size() == L-l+1
// mixed pools down to the bottleneck extent, then concatenates the reduced maps
// (level order) followed by the standard pooled path.
Var dense_pool_connect(std::span<const Var> encoder_outputs, Var standard_path,
                       std::span<const std::vector<PoolAlpha>> hops);

}  // namespace covidseg
