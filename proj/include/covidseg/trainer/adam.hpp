#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "covidseg/segnet/param_store.hpp"

namespace covidseg {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

// One bias-corrected Adam update over every parameter of the store, in
// registration order. A missing gradient counts as zero. Throws naming the
// parameter when a gradient is not finite; nothing is modified in that case.
void adam_step(ParamStore& params, AdamState& state, const AdamConfig& config);

// Scales every gradient of the store by max_norm / ||g|| when the global L2 norm
// ||g|| exceeds max_norm. Returns ||g||; a non-finite norm leaves gradients untouched.
double clip_gradient_norm(ParamStore& params, double max_norm);

// Update of a single buffer with the given (already incremented) step count.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, const AdamConfig& config);

}  // namespace covidseg
