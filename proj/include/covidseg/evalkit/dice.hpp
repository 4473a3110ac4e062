#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "covidseg/ctio/volume.hpp"
#include "json.hpp"

namespace covidseg {

// 2|P & G| / (|P| + |G|) over voxels equal to class_id; 1 when both are empty.
double dice_score(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t class_id);

struct EvalClass {
  std::string name;
  std::uint8_t id = 0;
};

// normal = 2, infection = 3
std::vector<EvalClass> default_eval_classes();

struct CaseDice {
  std::string id;
  std::map<std::string, double> dice;
  std::map<std::string, bool> vacuous;  // class absent from both prediction and truth
};

struct DiceReport {
  nlohmann::json fold;  // echoed verbatim
  std::vector<EvalClass> classes;
  std::vector<CaseDice> cases;
  std::map<std::string, double> mean;
};

void to_json(nlohmann::json& j, const DiceReport& r);

struct EvalPair {
  std::string id;
  std::filesystem::path pred;
  std::filesystem::path gt;
};

// Scores already-loaded volumes. Rejects count or grid mismatches, listing the ids.
DiceReport evaluate_volumes(const std::vector<std::string>& ids, const std::vector<LabelVolume>& preds,
                            const std::vector<LabelVolume>& gts, const std::vector<EvalClass>& classes,
                            nlohmann::json fold = nullptr);

DiceReport evaluate(const std::vector<EvalPair>& pairs, const std::vector<EvalClass>& classes = default_eval_classes(),
                    nlohmann::json fold = nullptr);

// Arithmetic mean over reports of each class's mean.
std::map<std::string, double> aggregate_means(const std::vector<DiceReport>& reports);

}  // namespace covidseg
