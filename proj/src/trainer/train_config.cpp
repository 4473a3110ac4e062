#include "covidseg/trainer/train_config.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace covidseg {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("invalid train config: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("invalid train config: epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("invalid train config: learning_rate must be > 0");
  if (!(gdl_eps > 0.0)) throw std::invalid_argument("invalid train config: gdl_eps must be > 0");
  if (!(adam_eps > 0.0)) throw std::invalid_argument("invalid train config: adam_eps must be > 0");
  if (!(grad_clip_norm >= 0.0)) throw std::invalid_argument("invalid train config: grad_clip_norm must be >= 0");
  for (double b : adam_betas)
    if (!(b >= 0.0 && b < 1.0)) throw std::invalid_argument("invalid train config: adam betas must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size}, {"epochs", c.epochs},   {"learning_rate", c.learning_rate},
                     {"adam_betas", c.adam_betas}, {"adam_eps", c.adam_eps}, {"seed", c.seed},
                     {"gdl_eps", c.gdl_eps},       {"grad_clip_norm", c.grad_clip_norm},
                     {"strict_determinism", c.strict_determinism}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "batch_size") c.batch_size = it->get<int>();
    else if (k == "epochs") c.epochs = it->get<int>();
    else if (k == "learning_rate") c.learning_rate = it->get<double>();
    else if (k == "adam_betas") c.adam_betas = it->get<std::array<double, 2>>();
    else if (k == "adam_eps") c.adam_eps = it->get<double>();
    else if (k == "seed") c.seed = it->get<std::uint64_t>();
    else if (k == "gdl_eps") c.gdl_eps = it->get<double>();
    else if (k == "grad_clip_norm") c.grad_clip_norm = it->get<double>();
    else if (k == "strict_determinism") c.strict_determinism = it->get<bool>();
    else throw std::invalid_argument("invalid train config: unknown key '" + k + "'");
  }
}

bool strict_mode_forced_by_env() {
  const char* v = std::getenv("COVIDSEG_STRICT");
  return v != nullptr && std::string(v) == "1";
}

}  // namespace covidseg
