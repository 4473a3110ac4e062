#pragma once

#include <cstdint>
#include <vector>

#include "covidseg/core/gradcheck.hpp"
#include "covidseg/segnet/model_config.hpp"
#include "json.hpp"

namespace covidseg {

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  // Desk model checked end to end; image_size is forced to 16.
  ModelConfig model;
  // Parameter tensors of the model are probed at this many evenly spaced elements.
  std::size_t model_probes_per_tensor = 6;
};

struct GradSuiteResult {
  double tolerance = 0.0;
  std::vector<GradCheckReport> reports;
  bool passed() const;
};

// Every differentiable operator, the composite layers, the loss and the full
// model, each against central differences.
GradSuiteResult run_gradcheck_suite(const GradSuiteOptions& options);

void to_json(nlohmann::json& j, const GradSuiteResult& r);

}  // namespace covidseg
