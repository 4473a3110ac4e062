#pragma once

#include <array>
#include <cstdint>

#include "json.hpp"

namespace covidseg {

struct TrainConfig {
  int batch_size = 10;  // slice triples per step
  int epochs = 100;
  double learning_rate = 1e-3;
  std::array<double, 2> adam_betas{0.9, 0.999};
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double gdl_eps = 1e-6;
  // Rescale the whole gradient to this L2 norm when it is larger; 0 disables.
  double grad_clip_norm = 0.0;
  bool strict_determinism = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// True when COVIDSEG_STRICT=1 is set in the environment.
bool strict_mode_forced_by_env();

}  // namespace covidseg
