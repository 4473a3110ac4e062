#include "covidseg/segnet/model_config.hpp"

#include <stdexcept>
#include <string>

namespace covidseg {

namespace {
void fail(const std::string& what) { throw std::invalid_argument("invalid model config: " + what); }
}  // namespace

void ModelConfig::validate() const {
  if (depth < 2) fail("depth must be >= 2 (got " + std::to_string(depth) + ")");
  if (base_channels < 1) fail("base_channels must be >= 1");
  if (in_channels < 1) fail("in_channels must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (dilation_rates.empty()) fail("dilation_rates must be non-empty");
  if (dilation_rates.front() != 1) fail("dilation_rates must start at 1");
  for (std::size_t i = 1; i < dilation_rates.size(); ++i) {
    if (dilation_rates[i] <= dilation_rates[i - 1]) fail("dilation_rates must be strictly increasing");
  }
  if (!ablation_unet) {
    if (dilated_block_levels.size() != 2) {
      fail("dilated_block_levels must have exactly 2 members (got " + std::to_string(dilated_block_levels.size()) + ")");
    }
    for (int level : dilated_block_levels) {
      if (level < 1 || level > depth) fail("dilated block level " + std::to_string(level) + " outside 1..depth");
    }
  }
  if (image_size < 1 || image_size % (1 << depth) != 0) {
    fail("image_size " + std::to_string(image_size) + " not divisible by 2^depth = " + std::to_string(1 << depth));
  }
}

int ModelConfig::level_width(int level) const { return base_channels << (level - 1); }

int ModelConfig::encoder_width(int level) const {
  const int w = level_width(level);
  if (!has_dilated_block(level)) return w;
  const int rates = static_cast<int>(dilation_rates.size());
  return ((w + rates - 1) / rates) * rates;
}

int ModelConfig::bottleneck_width() const { return base_channels << depth; }

int ModelConfig::bottleneck_input_width() const {
  int channels = encoder_width(depth);
  if (uses_dense_pooling()) {
    for (int level = 1; level <= depth; ++level) channels += encoder_width(level);
  }
  return channels;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"depth", c.depth},
                     {"base_channels", c.base_channels},
                     {"in_channels", c.in_channels},
                     {"num_classes", c.num_classes},
                     {"dilation_rates", c.dilation_rates},
                     {"dilated_block_levels", c.dilated_block_levels},
                     {"dense_pooling", c.dense_pooling},
                     {"mixed_pool_alpha_learnable", c.mixed_pool_alpha_learnable},
                     {"ablation_unet", c.ablation_unet},
                     {"image_size", c.image_size}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "depth") c.depth = it->get<int>();
    else if (key == "base_channels") c.base_channels = it->get<int>();
    else if (key == "in_channels") c.in_channels = it->get<int>();
    else if (key == "num_classes") c.num_classes = it->get<int>();
    else if (key == "dilation_rates") c.dilation_rates = it->get<std::vector<int>>();
    else if (key == "dilated_block_levels") c.dilated_block_levels = it->get<std::set<int>>();
    else if (key == "dense_pooling") c.dense_pooling = it->get<bool>();
    else if (key == "mixed_pool_alpha_learnable") c.mixed_pool_alpha_learnable = it->get<bool>();
    else if (key == "ablation_unet") c.ablation_unet = it->get<bool>();
    else if (key == "image_size") c.image_size = it->get<int>();
    else throw std::invalid_argument("invalid model config: unknown key '" + key + "'");
  }
}

}  // namespace covidseg
