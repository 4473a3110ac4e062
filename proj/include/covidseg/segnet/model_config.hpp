#pragma once

#include <set>
#include <vector>

#include "json.hpp"

namespace covidseg {

// Architecture hyperparameters of the segmentation FCN.
struct ModelConfig {
  int depth = 4;
  int base_channels = 8;
  int in_channels = 3;
  int num_classes = 4;
  std::vector<int> dilation_rates{1, 2, 4};
  std::set<int> dilated_block_levels{3, 4};
  bool dense_pooling = true;
  bool mixed_pool_alpha_learnable = true;
  // Plain U-Net: no dense pooling, no dilated blocks, max pooling between levels.
  bool ablation_unet = false;
  // Square in-plane size S the network runs at; must be divisible by 2^depth.
  int image_size = 384;

  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  bool uses_dense_pooling() const { return dense_pooling && !ablation_unet; }
  bool uses_mixed_pooling() const { return !ablation_unet; }
  bool has_dilated_block(int level) const { return !ablation_unet && dilated_block_levels.count(level) > 0; }

  // Width of the first conv at encoder/decoder level (1-based): base * 2^(level-1).
  int level_width(int level) const;
  // Channels leaving encoder level `level`. A dilated block splits its output evenly
  // across the rates, so its width is rounded up to a multiple of the rate count.
  int encoder_width(int level) const;
  int bottleneck_width() const;
  int bottleneck_input_width() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace covidseg
