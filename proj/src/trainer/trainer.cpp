#include "covidseg/trainer/trainer.hpp"

#include <cmath>
#include <cstring>
#include <future>
#include <numeric>

#include "covidseg/core/ops.hpp"
#include "covidseg/core/rng.hpp"
#include "covidseg/ctio/nifti.hpp"
#include "covidseg/ctio/preprocess.hpp"
#include "covidseg/segnet/checkpoint.hpp"
#include "covidseg/trainer/adam.hpp"
#include "covidseg/trainer/gdl.hpp"

namespace covidseg {

void to_json(nlohmann::json& j, const LossHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (std::size_t e = 0; e < h.epoch_mean_loss.size(); ++e) {
    epochs.push_back({{"epoch", e + 1}, {"mean_loss", h.epoch_mean_loss[e]}});
  }
  j = nlohmann::json{{"fold", h.fold}, {"seed", h.seed}, {"epochs", std::move(epochs)}, {"step_loss", h.step_loss}};
}

namespace {

std::vector<TrainingSample> samples_for_case(const CaseEntry& entry, std::size_t image_size) {
  CtVolume ct;
  LabelVolume labels;
  try {
    ct = read_ct(entry.ct_path);
    labels = read_labels(entry.label_path);
  } catch (const std::exception& e) {
    throw TrainingError(TrainingError::Kind::UnreadableVolume, "case '" + entry.id + "': " + e.what());
  }
  if (!ct.same_grid(labels)) {
    throw TrainingError(TrainingError::Kind::UnreadableVolume, "case '" + entry.id + "': CT and label grids differ");
  }
  std::vector<SliceTriple> triples = prepare_volume(ct, image_size);
  std::vector<TrainingSample> out;
  out.reserve(triples.size());
  for (auto& t : triples) {
    const std::span<const std::uint8_t> slice(labels.slice(t.center_index), labels.slice_size());
    out.push_back({std::move(t.image), resize_labels(slice, labels.height, labels.width, image_size, image_size)});
  }
  return out;
}

std::uint64_t shuffle_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull; }

}  // namespace

std::vector<TrainingSample> load_samples(const Manifest& manifest, const std::vector<std::string>& ids,
                                         std::size_t image_size, int num_classes, bool strict) {
  std::vector<std::vector<TrainingSample>> per_case(ids.size());
  if (strict) {
    for (std::size_t i = 0; i < ids.size(); ++i) per_case[i] = samples_for_case(manifest.find(ids[i]), image_size);
  } else {
    std::vector<std::future<std::vector<TrainingSample>>> jobs;
    for (const auto& id : ids) {
      jobs.push_back(std::async(std::launch::async, samples_for_case, std::cref(manifest.find(id)), image_size));
    }
    for (std::size_t i = 0; i < ids.size(); ++i) per_case[i] = jobs[i].get();
  }
  std::vector<TrainingSample> all;
  for (auto& v : per_case)
    for (auto& s : v) {
      for (std::uint8_t l : s.labels) {
        if (l >= num_classes) {
          throw TrainingError(TrainingError::Kind::UnreadableVolume,
                              "label " + std::to_string(l) + " exceeds the model's class count");
        }
      }
      all.push_back(std::move(s));
    }
  return all;
}

TrainResult train_on_samples(const std::vector<TrainingSample>& samples, const ModelConfig& model_config,
                             const TrainConfig& train_config, int fold, const EpochCallback& on_epoch) {
  train_config.validate();
  if (samples.empty()) throw TrainingError(TrainingError::Kind::EmptyTrainingSet, "training set is empty");
  TrainResult result{build_model(model_config, train_config.seed), {fold, train_config.seed, {}, {}}};
  Model& model = result.model;
  const std::size_t s = static_cast<std::size_t>(model_config.image_size);
  const std::size_t classes = static_cast<std::size_t>(model_config.num_classes);
  const std::size_t plane = s * s;
  for (const auto& sample : samples) {
    if (sample.image.shape() != Shape{3, s, s} || sample.labels.size() != plane) {
      throw std::invalid_argument("train: sample of shape " + shape_string(sample.image.shape()) +
                                  " does not match model image size " + std::to_string(s));
    }
  }

  const AdamConfig adam{train_config.learning_rate, train_config.adam_betas[0], train_config.adam_betas[1],
                        train_config.adam_eps};
  AdamState state;
  Rng order_rng(shuffle_seed(train_config.seed));
  std::vector<std::size_t> order(samples.size());
  const std::size_t batch = static_cast<std::size_t>(train_config.batch_size);

  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    double epoch_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      Tensor images({count, 3, s, s});
      Tensor targets({count, classes, s, s}, 0.0);
      for (std::size_t b = 0; b < count; ++b) {
        const TrainingSample& sample = samples[order[start + b]];
        std::memcpy(&images[b * 3 * plane], sample.image.data().data(), 3 * plane * sizeof(double));
        for (std::size_t i = 0; i < plane; ++i) targets[(b * classes + sample.labels[i]) * plane + i] = 1.0;
      }
      double loss_value;
      {
        Graph graph;
        const Var probs = forward(graph, model, graph.constant(std::move(images)));
        const Var loss = generalized_dice_loss(probs, targets, train_config.gdl_eps);
        loss_value = loss.value()[0];
        if (!std::isfinite(loss_value)) {
          throw TrainingError(TrainingError::Kind::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch) +
                                                                      ", step " + std::to_string(steps + 1));
        }
        graph.backward(loss);
      }
      if (train_config.grad_clip_norm > 0.0) clip_gradient_norm(model.params, train_config.grad_clip_norm);
      try {
        adam_step(model.params, state, adam);
      } catch (const std::runtime_error& e) {
        throw TrainingError(TrainingError::Kind::NonFiniteGradient,
                            std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(steps + 1));
      }
      model.params.zero_grad();
      result.history.step_loss.push_back(loss_value);
      epoch_sum += loss_value;
      ++steps;
    }
    const double mean = epoch_sum / static_cast<double>(steps);
    result.history.epoch_mean_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

TrainResult train(const Manifest& manifest, const ModelConfig& model_config, const TrainConfig& train_config,
                  const FoldPlan& plan, int held_out_fold, const EpochCallback& on_epoch) {
  model_config.validate();
  train_config.validate();
  const std::vector<std::string> ids = plan.training_ids(held_out_fold);
  if (ids.empty()) {
    throw TrainingError(TrainingError::Kind::EmptyTrainingSet,
                        "no training volumes outside held-out fold " + std::to_string(held_out_fold));
  }
  const auto samples = load_samples(manifest, ids, static_cast<std::size_t>(model_config.image_size),
                                    model_config.num_classes, train_config.strict_determinism);
  return train_on_samples(samples, model_config, train_config, held_out_fold, on_epoch);
}

LabelVolume infer_volume(const Model& model, const CtVolume& volume, int batch_size) {
  if (model.config.in_channels != 3) {
    throw std::invalid_argument("infer_volume: model expects " + std::to_string(model.config.in_channels) +
                                " input channels, slice triples provide 3");
  }
  if (batch_size < 1) throw std::invalid_argument("infer_volume: batch_size must be >= 1");
  const std::size_t s = static_cast<std::size_t>(model.config.image_size);
  const std::vector<SliceTriple> triples = prepare_volume(volume, s);
  const std::size_t plane = s * s;
  const std::size_t classes = static_cast<std::size_t>(model.config.num_classes);
  std::vector<Tensor> probs;
  probs.reserve(triples.size());
  for (std::size_t start = 0; start < triples.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(static_cast<std::size_t>(batch_size), triples.size() - start);
    Tensor batch({count, 3, s, s});
    for (std::size_t b = 0; b < count; ++b) {
      std::memcpy(&batch[b * 3 * plane], triples[start + b].image.data().data(), 3 * plane * sizeof(double));
    }
    const Tensor out = predict(model, batch);
    for (std::size_t b = 0; b < count; ++b) {
      Tensor p({classes, s, s});
      std::memcpy(p.data().data(), &out[b * classes * plane], classes * plane * sizeof(double));
      probs.push_back(std::move(p));
    }
  }
  return reconstruct_volume(probs, volume);
}

LabelVolume infer_volume(const std::filesystem::path& checkpoint, const CtVolume& volume, int batch_size) {
  const LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  return infer_volume(loaded.model, volume, batch_size);
}

}  // namespace covidseg
