#include "covidseg/trainer/folds.hpp"

#include <set>
#include <stdexcept>

#include "covidseg/core/rng.hpp"

namespace covidseg {

std::vector<std::string> FoldPlan::fold(int index) const {
  if (index < 0 || index >= k) throw std::out_of_range("fold index " + std::to_string(index) + " outside 0.." + std::to_string(k - 1));
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment)
    if (f == index) out.push_back(id);
  return out;
}

std::vector<std::string> FoldPlan::training_ids(int held_out) const {
  if (held_out < 0 || held_out >= k) throw std::out_of_range("held-out fold " + std::to_string(held_out) + " outside 0.." + std::to_string(k - 1));
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment)
    if (f != held_out) out.push_back(id);
  return out;
}

FoldPlan make_folds(const std::vector<std::string>& volume_ids, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("make_folds: k must be >= 1");
  if (static_cast<std::size_t>(k) > volume_ids.size()) {
    throw std::invalid_argument("make_folds: k = " + std::to_string(k) + " exceeds the " +
                                std::to_string(volume_ids.size()) + " available volumes");
  }
  if (std::set<std::string>(volume_ids.begin(), volume_ids.end()).size() != volume_ids.size()) {
    throw std::invalid_argument("make_folds: duplicate volume ids");
  }
  std::vector<std::string> order = volume_ids;
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan{k, seed, {}};
  for (std::size_t i = 0; i < order.size(); ++i) plan.assignment[order[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  return plan;
}

void to_json(nlohmann::json& j, const FoldPlan& plan) {
  j = nlohmann::json{{"k", plan.k}, {"seed", plan.seed}, {"assignment", plan.assignment}};
}

}  // namespace covidseg
