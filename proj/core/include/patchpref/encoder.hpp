#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "patchpref/autograd.hpp"
#include "patchpref/grid.hpp"
#include "patchpref/synth.hpp"
#include "patchpref/tensor.hpp"

namespace patchpref {

enum class Nonlinearity { kRelu, kTanh };

struct EncoderConfig {
  std::size_t layers = 5;
  std::size_t channels = 16;
  std::size_t kernel = 3;
  Nonlinearity nonlinearity = Nonlinearity::kRelu;
  bool residual = true;  // layers 2..L add their activation to the running map
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t input_channels = 3;

  std::size_t grid() const { return image_size / patch_size; }
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Per-layer feature maps, each D×H×W on the patch grid.
using FeaturePyramid = std::vector<Tensor>;

/// Patchifier (mean pool to the grid) followed by stride-1 same-padded conv layers.
/// Each exposed feature map is L2-normalized per grid cell.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  /// Parameter names in params() order: conv<l>.weight, conv<l>.bias (l from 1).
  std::vector<std::string> param_names() const;

  FeaturePyramid encode(const Tensor& image) const;
  /// Records the forward pass on `tape` using `weights` (one Var per parameter).
  std::vector<ag::Var> forward(ag::Tape& tape, const ag::Var& image,
                               const std::vector<ag::Var>& weights) const;

  friend bool operator==(const Encoder&, const Encoder&) = default;

 private:
  void check_image(const Tensor& image) const;

  EncoderConfig cfg_;
  std::vector<Tensor> params_;
};

struct PretrainConfig {
  std::size_t templates = 32;
  std::size_t max_steps = 1000;
  std::size_t batch = 16;
  double learning_rate = 1e-2;
  double target_accuracy = 0.95;
  std::size_t min_steps = 20;
  double template_separation = 0.15;  // min pixel max-abs difference between templates
};

struct PretrainResult {
  Encoder encoder;
  Tensor head_weight;  // K×D×1×1
  Tensor head_bias;    // K
  std::vector<Tensor> templates;  // C×p×p each
  std::size_t steps = 0;
  double accuracy = 0.0;
  std::vector<double> loss_trace;
};

/// Samples K mutually distinct patch-aligned templates from the images.
std::vector<Tensor> sample_templates(const std::vector<Tensor>& images, std::size_t count,
                                     double separation, const EncoderConfig& cfg, Rng& rng);

/// Tiles random templates over the grid; labels[cell] is the template id.
Tensor tile_templates(const std::vector<Tensor>& templates, const std::vector<int>& labels,
                      const EncoderConfig& cfg);

/// Proxy-task accuracy of `encoder` + head on `batches` freshly tiled images.
double proxy_accuracy(const Encoder& encoder, const Tensor& head_weight, const Tensor& head_bias,
                      const std::vector<Tensor>& templates, std::size_t images, Rng& rng);

/// Patch-identity classification pre-training. Throws DivergenceError when the
/// target accuracy is not reached within max_steps.
PretrainResult pretrain_encoder(const std::vector<Tensor>& corpus, const EncoderConfig& cfg,
                                const PretrainConfig& pcfg, std::uint64_t seed);

struct SslState {
  Encoder model;
  Encoder frozen;
  std::size_t epoch = 0;

  static SslState from_pretrained(const Encoder& e) { return {e, e, 0}; }
};

struct SslLoss {
  double l_self = 0.0, l_aug = 0.0, l_reg = 0.0;
};

/// L_aug = Σ_l mean((Aug(f_l(x)) − f_l(Aug(x)))²), L_reg = Σ_l mean((f_l(x) − f_ref,l(x))²).
SslLoss ssl_loss(const SslState& state, const Tensor& image, Augmentation aug);

struct SslEpochLog {
  std::size_t epoch = 0;
  double l_aug = 0.0, l_reg = 0.0, l_self = 0.0;
};

/// Gradient descent on L_self, one image per step, one random augmentation per image.
std::vector<SslEpochLog> train_ssl(SslState& state, const std::vector<Tensor>& corpus,
                                   std::size_t epochs, double learning_rate, std::uint64_t seed);

/// Mean of L_aug (and L_reg) over the corpus under every augmentation.
SslLoss mean_ssl_loss(const SslState& state, const std::vector<Tensor>& corpus);

/// S_patch for every layer (index 0 = first layer).
std::vector<double> s_patch_per_layer(const Encoder& encoder, const CorrespondenceCorpus& corpus);

/// Index of the highest score; ties go to the earliest (shallowest) entry.
std::size_t select_layer(const std::vector<double>& scores);

}  // namespace patchpref
