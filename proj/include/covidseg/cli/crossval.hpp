#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "covidseg/evalkit/dice.hpp"
#include "covidseg/segnet/model_config.hpp"
#include "covidseg/trainer/folds.hpp"
#include "covidseg/trainer/train_config.hpp"
#include "covidseg/trainer/trainer.hpp"
#include "json.hpp"

namespace covidseg {

struct CrossvalOptions {
  std::filesystem::path manifest;
  ModelConfig model;
  TrainConfig train;
  int k = 10;
  std::uint64_t fold_seed = 0;
  // Receives fold_<i>.ckpt, fold_<i>_report.json, fold_<i>_loss.json and, when
  // write_predictions is set, fold_<i>/<id>_pred.nii.
  std::filesystem::path work_dir;
  bool write_predictions = false;
  // Copied into every written JSON document.
  nlohmann::json provenance = nlohmann::json::object();
  // Progress lines (one per epoch and per fold); empty to stay quiet.
  std::function<void(const std::string&)> log;
};

struct FoldOutcome {
  int fold = 0;
  std::vector<std::string> held_out;
  std::filesystem::path checkpoint;
  std::filesystem::path report_path;
  std::filesystem::path loss_path;
  DiceReport report;
  LossHistory history;
};

struct CrossvalResult {
  FoldPlan plan;
  std::vector<FoldOutcome> folds;
  std::map<std::string, double> mean;  // over every held-out volume
};

nlohmann::json fold_metadata(const FoldPlan& plan, int fold);

// Trains one model per fold, infers the held-out volumes at their original
// resolution and scores them.
CrossvalResult run_crossval(const CrossvalOptions& options);

nlohmann::json aggregate_report(const CrossvalResult& result, const nlohmann::json& provenance);

// Writes pretty JSON, creating parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace covidseg
