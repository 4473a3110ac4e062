#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "covidseg/ctio/manifest.hpp"
#include "covidseg/ctio/volume.hpp"
#include "covidseg/segnet/model.hpp"
#include "covidseg/trainer/folds.hpp"
#include "covidseg/trainer/train_config.hpp"
#include "json.hpp"

namespace covidseg {

class TrainingError : public std::runtime_error {
 public:
  enum class Kind { EmptyTrainingSet, UnreadableVolume, NonFiniteLoss, NonFiniteGradient };

  TrainingError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// One training example: a slice triple and the labels of its centre slice, both at
// the model resolution S.
struct TrainingSample {
  Tensor image;                       // (3, S, S)
  std::vector<std::uint8_t> labels;   // S * S
};

struct LossHistory {
  int fold = -1;
  std::uint64_t seed = 0;
  std::vector<double> epoch_mean_loss;
  std::vector<double> step_loss;
};

void to_json(nlohmann::json& j, const LossHistory& h);

struct TrainResult {
  Model model;
  LossHistory history;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Triples of every slice of the given cases, labels resized (nearest) to S.
// Non-strict mode prepares volumes concurrently; the result order is the same.
std::vector<TrainingSample> load_samples(const Manifest& manifest, const std::vector<std::string>& ids,
                                         std::size_t image_size, int num_classes, bool strict);

// Builds the model from (model_config, train_config.seed) and runs
// train_config.epochs epochs of Adam on the generalized Dice loss. Each epoch
// visits a seeded shuffle of all samples in consecutive batches.
TrainResult train_on_samples(const std::vector<TrainingSample>& samples, const ModelConfig& model_config,
                             const TrainConfig& train_config, int fold = -1, const EpochCallback& on_epoch = {});

// Trains on every fold of the plan except held_out_fold.
TrainResult train(const Manifest& manifest, const ModelConfig& model_config, const TrainConfig& train_config,
                  const FoldPlan& plan, int held_out_fold, const EpochCallback& on_epoch = {});

// normalize -> resize -> triples -> batched forward -> argmax + resize back.
LabelVolume infer_volume(const Model& model, const CtVolume& volume, int batch_size = 10);
LabelVolume infer_volume(const std::filesystem::path& checkpoint, const CtVolume& volume, int batch_size = 10);

}  // namespace covidseg
