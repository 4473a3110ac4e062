#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "covidseg/core/graph.hpp"

namespace covidseg {

struct GradCheckInput {
  std::string name;
  Tensor tensor;  // requires_grad is forced on during the check
};

struct GradCheckEntry {
  std::string name;
  std::size_t probed = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::string failure;  // non-empty when a probe produced a non-finite value
};

struct GradCheckReport {
  std::string op;
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  bool passed(double tolerance) const;
};

struct GradCheckOptions {
  double step = 1e-5;
  // 0 probes every element; otherwise at most this many evenly spaced elements per input.
  std::size_t max_probes_per_input = 0;
};

// Builds a scalar loss from graph leaves bound to the inputs, in order.
using LossBuilder = std::function<Var(Graph&, std::span<const Var>)>;

// Compares reverse-mode gradients against central differences. The per-element
// error is |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(std::string op, const LossBuilder& build, std::vector<GradCheckInput> inputs,
                           const GradCheckOptions& options = {});

}  // namespace covidseg
