#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "covidseg/core/graph.hpp"
#include "covidseg/segnet/model_config.hpp"
#include "covidseg/segnet/param_store.hpp"

namespace covidseg {

struct Model {
  ModelConfig config;
  std::uint64_t seed = 0;
  ParamStore params;
};

// Encoder of config.depth levels (conv3x3+ReLU, then either a second conv3x3+ReLU
// or a dilated block), mixed pooling between levels, dense pooling connections
// into a two-conv bottleneck, a decoder of nearest upsampling + skip concat + two
// convs per level, and a 1x1 head followed by softmax over classes.
//
// Kernels ~ N(0, sqrt(2 / fan_in)) drawn in registration order, biases 0,
// alpha_raw 0.
Model build_model(const ModelConfig& config, std::uint64_t seed);

// Records the forward pass with every parameter bound for gradients.
// batch: (N, in_channels, S, S), S divisible by 2^depth. Returns (N, classes, S, S).
Var forward(Graph& graph, Model& model, Var batch);

// Forward pass over parameters supplied by name, e.g. graph leaves owned elsewhere.
using ParamLookup = std::function<Var(const std::string&)>;
Var forward_with(const ModelConfig& config, const ParamLookup& param, Var batch);

// Inference without gradients.
Tensor predict(const Model& model, const Tensor& batch);

}  // namespace covidseg
