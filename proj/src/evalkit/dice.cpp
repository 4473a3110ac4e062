#include "covidseg/evalkit/dice.hpp"

#include <stdexcept>

#include "covidseg/ctio/nifti.hpp"

namespace covidseg {

namespace {

std::string grid_string(const LabelVolume& v) {
  return "(" + std::to_string(v.depth) + "," + std::to_string(v.height) + "," + std::to_string(v.width) + ")";
}

std::string join(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
  return out;
}

struct Counts {
  std::size_t pred = 0, gt = 0, both = 0;
};

Counts count(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t class_id) {
  if (!pred.same_grid(gt) || pred.data.size() != gt.data.size()) {
    throw std::invalid_argument("dice_score: prediction " + grid_string(pred) + " vs ground truth " + grid_string(gt));
  }
  Counts c;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const bool p = pred.data[i] == class_id, g = gt.data[i] == class_id;
    c.pred += p;
    c.gt += g;
    c.both += p && g;
  }
  return c;
}

}  // namespace

double dice_score(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t class_id) {
  const Counts c = count(pred, gt, class_id);
  if (c.pred + c.gt == 0) return 1.0;
  return 2.0 * static_cast<double>(c.both) / static_cast<double>(c.pred + c.gt);
}

std::vector<EvalClass> default_eval_classes() { return {{"normal", kClassNormal}, {"infection", kClassInfection}}; }

void to_json(nlohmann::json& j, const DiceReport& r) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases) cases.push_back({{"id", c.id}, {"dice", c.dice}, {"vacuous", c.vacuous}});
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& c : r.classes) classes[c.name] = c.id;
  j = nlohmann::json{{"fold", r.fold},
                     {"aggregation", "per-case-then-mean"},
                     {"classes", classes},
                     {"cases", std::move(cases)},
                     {"mean", r.mean}};
}

DiceReport evaluate_volumes(const std::vector<std::string>& ids, const std::vector<LabelVolume>& preds,
                            const std::vector<LabelVolume>& gts, const std::vector<EvalClass>& classes,
                            nlohmann::json fold) {
  if (ids.size() != preds.size() || ids.size() != gts.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(ids.size()) + " ids, " + std::to_string(preds.size()) +
                                " predictions, " + std::to_string(gts.size()) + " ground truths");
  }
  if (ids.empty()) throw std::invalid_argument("evaluate: no volumes");
  if (classes.empty()) throw std::invalid_argument("evaluate: no classes requested");
  std::vector<std::string> mismatched;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!preds[i].same_grid(gts[i])) mismatched.push_back(ids[i] + " " + grid_string(preds[i]) + " vs " + grid_string(gts[i]));
  }
  if (!mismatched.empty()) throw std::invalid_argument("evaluate: shape mismatch for " + join(mismatched));

  DiceReport report;
  report.fold = std::move(fold);
  report.classes = classes;
  for (const auto& cls : classes) report.mean[cls.name] = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CaseDice cd{ids[i], {}, {}};
    for (const auto& cls : classes) {
      const Counts c = count(preds[i], gts[i], cls.id);
      const bool vacuous = c.pred + c.gt == 0;
      const double d = vacuous ? 1.0 : 2.0 * static_cast<double>(c.both) / static_cast<double>(c.pred + c.gt);
      cd.dice[cls.name] = d;
      cd.vacuous[cls.name] = vacuous;
      report.mean[cls.name] += d;
    }
    report.cases.push_back(std::move(cd));
  }
  for (auto& [name, v] : report.mean) v /= static_cast<double>(ids.size());
  return report;
}

DiceReport evaluate(const std::vector<EvalPair>& pairs, const std::vector<EvalClass>& classes, nlohmann::json fold) {
  std::vector<std::string> unpaired;
  for (const auto& p : pairs) {
    if (p.pred.empty() || p.gt.empty()) unpaired.push_back(p.id);
  }
  if (!unpaired.empty()) throw std::invalid_argument("evaluate: unpaired volumes: " + join(unpaired));
  std::vector<std::string> ids;
  std::vector<LabelVolume> preds, gts;
  for (const auto& p : pairs) {
    ids.push_back(p.id);
    preds.push_back(read_labels(p.pred));
    gts.push_back(read_labels(p.gt));
  }
  return evaluate_volumes(ids, preds, gts, classes, std::move(fold));
}

std::map<std::string, double> aggregate_means(const std::vector<DiceReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_means: no reports");
  std::map<std::string, double> out;
  for (const auto& r : reports)
    for (const auto& [name, v] : r.mean) out[name] += v;
  for (auto& [name, v] : out) v /= static_cast<double>(reports.size());
  return out;
}

}  // namespace covidseg
