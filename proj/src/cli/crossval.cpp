#include "covidseg/cli/crossval.hpp"

#include <fstream>
#include <stdexcept>

#include "covidseg/ctio/manifest.hpp"
#include "covidseg/ctio/nifti.hpp"
#include "covidseg/segnet/checkpoint.hpp"

namespace covidseg {

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

nlohmann::json fold_metadata(const FoldPlan& plan, int fold) {
  return {{"index", fold}, {"k", plan.k}, {"seed", plan.seed}, {"held_out", plan.fold(fold)}};
}

CrossvalResult run_crossval(const CrossvalOptions& o) {
  const Manifest manifest = load_manifest(o.manifest);
  CrossvalResult result;
  result.plan = make_folds(manifest.ids(), o.k, o.fold_seed);
  std::filesystem::create_directories(o.work_dir);
  auto log = [&](const std::string& line) {
    if (o.log) o.log(line);
  };

  std::vector<DiceReport> reports;
  for (int f = 0; f < o.k; ++f) {
    FoldOutcome outcome;
    outcome.fold = f;
    outcome.held_out = result.plan.fold(f);
    const std::string stem = "fold_" + std::to_string(f);
    TrainResult trained = train(manifest, o.model, o.train, result.plan, f, [&](int epoch, double loss) {
      log(stem + " epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
    });
    outcome.history = trained.history;

    const nlohmann::json meta = fold_metadata(result.plan, f);
    outcome.checkpoint = o.work_dir / (stem + ".ckpt");
    save_checkpoint(outcome.checkpoint, trained.model, {{"fold", meta}, {"train", o.train}, {"provenance", o.provenance}});

    std::vector<LabelVolume> preds, gts;
    for (const auto& id : outcome.held_out) {
      const CaseEntry& entry = manifest.find(id);
      const CtVolume ct = read_ct(entry.ct_path);
      preds.push_back(infer_volume(trained.model, ct, o.train.batch_size));
      gts.push_back(read_labels(entry.label_path));
      if (o.write_predictions) {
        std::filesystem::create_directories(o.work_dir / stem);
        write_nifti(preds.back(), o.work_dir / stem / (id + "_pred.nii"));
      }
    }
    outcome.report = evaluate_volumes(outcome.held_out, preds, gts, default_eval_classes(), meta);

    nlohmann::json report = outcome.report;
    report["provenance"] = o.provenance;
    outcome.report_path = o.work_dir / (stem + "_report.json");
    write_json(outcome.report_path, report);
    nlohmann::json loss = outcome.history;
    loss["provenance"] = o.provenance;
    outcome.loss_path = o.work_dir / (stem + "_loss.json");
    write_json(outcome.loss_path, loss);

    std::string summary = stem;
    for (const auto& [name, v] : outcome.report.mean) summary += " " + name + " " + std::to_string(v);
    log(summary);
    reports.push_back(outcome.report);
    result.folds.push_back(std::move(outcome));
  }
  // Every volume is held out exactly once, so this is the mean over all volumes.
  std::size_t cases = 0;
  for (const auto& r : reports)
    for (const auto& c : r.cases) {
      ++cases;
      for (const auto& [name, v] : c.dice) result.mean[name] += v;
    }
  for (auto& [name, v] : result.mean) v /= static_cast<double>(cases);
  return result;
}

nlohmann::json aggregate_report(const CrossvalResult& result, const nlohmann::json& provenance) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : result.folds) {
    folds.push_back({{"fold", f.fold},
                     {"held_out", f.held_out},
                     {"checkpoint", f.checkpoint.string()},
                     {"report", f.report_path.string()},
                     {"loss_history", f.loss_path.string()},
                     {"mean", f.report.mean},
                     {"final_epoch_loss", f.history.epoch_mean_loss.empty() ? 0.0 : f.history.epoch_mean_loss.back()}});
  }
  return {{"provenance", provenance},
          {"plan", result.plan},
          {"aggregation", "per-case-then-mean"},
          {"folds", std::move(folds)},
          {"mean", result.mean}};
}

}  // namespace covidseg
