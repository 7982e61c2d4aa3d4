#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "patchpref/diffusion.hpp"
#include "patchpref/encoder.hpp"
#include "patchpref/error.hpp"
#include "patchpref/patch_match.hpp"
#include "patchpref/synth.hpp"

namespace patchpref {

class UnknownKeyError : public ConfigError {
 public:
  explicit UnknownKeyError(const std::string& key)
      : ConfigError("unknown config key '" + key + "'"), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "run";

  SceneGeometry geometry;
  double corruption_rate = 0.4;
  std::size_t ssl_images = 100;
  std::size_t train_pairs = 100;
  std::size_t heldout_pairs = 40;
  std::size_t quality_pairs = 200;
  std::size_t groups = 20;
  std::size_t images_per_group = 4;

  EncoderConfig encoder;
  PretrainConfig pretrain;
  std::size_t ssl_epochs = 10;
  double ssl_lr = 0.1;
  std::size_t layer = 0;  // 1-based override; 0 selects by S_patch

  WeightNorm weight_norm = WeightNorm::kMinMax;
  double background_quality = 1.0;

  std::vector<Objective> objectives{Objective::kMseGen, Objective::kDpo, Objective::kPatchDpo};
  DenoiserConfig denoiser;
  std::size_t diffusion_T = 100;
  TrainConfig train;
  std::size_t eval_draws = 4;
  std::size_t heatmap_samples = 8;

  /// Resolved `key = value` lines for every key, in a fixed order.
  std::string to_text() const;
};

PipelineConfig default_config();
/// Applies `key = value` lines over the defaults. `#` starts a comment.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

}  // namespace patchpref
