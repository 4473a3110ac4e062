#include "covidseg/trainer/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace covidseg {

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
                 std::uint64_t step, const AdamConfig& c) {
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

void adam_step(ParamStore& params, AdamState& state, const AdamConfig& config) {
  if (state.first_moment.empty()) {
    for (const auto& [name, t] : params) {
      state.first_moment.emplace_back(t.size(), 0.0);
      state.second_moment.emplace_back(t.size(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient in parameter '" + name + "'");
    }
  }
  ++state.step;
  std::size_t i = 0;
  for (auto& [name, t] : params) {
    if (state.first_moment[i].size() != t.size()) {
      throw std::invalid_argument("adam_step: moment buffer shape mismatch for '" + name + "'");
    }
    adam_update(t.data(), t.has_grad() ? t.grad() : std::span<const double>{}, state.first_moment[i],
                state.second_moment[i], state.step, config);
    ++i;
  }
}

double clip_gradient_norm(ParamStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm) || norm <= max_norm) return norm;
  const double scale = max_norm / norm;
  for (auto& [name, t] : params)
    if (t.has_grad())
      for (double& g : t.grad_buffer()) g *= scale;
  return norm;
}

}  // namespace covidseg
