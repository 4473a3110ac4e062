#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace covidseg {

// Volume-level cross-validation split.
struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignment;

  std::vector<std::string> fold(int index) const;
  std::vector<std::string> training_ids(int held_out) const;
};

// Seeded shuffle of the ids followed by round-robin assignment, so fold sizes
// differ by at most one. Rejects k < 1, k > ids.size() and duplicate ids.
FoldPlan make_folds(const std::vector<std::string>& volume_ids, int k, std::uint64_t seed);

void to_json(nlohmann::json& j, const FoldPlan& plan);

}  // namespace covidseg
