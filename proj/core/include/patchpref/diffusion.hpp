#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "patchpref/autograd.hpp"
#include "patchpref/synth.hpp"
#include "patchpref/tensor.hpp"

namespace patchpref {

/// Variance-preserving coefficients for t = 0..T; alpha[0] = 1, sigma[0] = 0.
struct DiffusionSchedule {
  std::size_t steps = 0;
  std::vector<double> alpha, sigma;
};

/// Linear betas, alpha_t = sqrt(Π(1 − β)). beta_start/beta_end describe a 1000-step
/// chain and are scaled by 1000/T (capped at 0.999).
DiffusionSchedule make_schedule(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.02);

/// alpha[t]·x0 + sigma[t]·eps.
Tensor forward_noise(const Tensor& x0, std::size_t t, const Tensor& eps, const DiffusionSchedule& s);

/// Everything the denoiser sees about a scene besides the noisy image.
struct Conditioning {
  Tensor reference;  // C×S×S reference pixels
  Tensor features;   // D×S×S reference encoder features, upsampled to pixels
  Tensor embedding;  // E descriptor embedding
};

/// Deterministic E-dim vector in [-1,1) derived from the descriptor text.
Tensor descriptor_embedding(const SceneDescriptor& d, std::size_t dim);

/// Sinusoidal time embedding: dim/2 sines then dim/2 cosines.
Tensor time_embedding(std::size_t t, std::size_t dim);

class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;
  virtual std::vector<Tensor>& params() = 0;
  virtual const std::vector<Tensor>& params() const = 0;
  virtual std::vector<std::string> param_names() const = 0;
  /// Predicted noise for x_t (C×S×S) with one Var per parameter.
  virtual ag::Var predict(ag::Tape& tape, const std::vector<ag::Var>& weights, const ag::Var& x_t,
                          const Conditioning& cond, std::size_t t) const = 0;
  virtual std::unique_ptr<DenoiserModel> clone() const = 0;

  Tensor predict(const Tensor& x_t, const Conditioning& cond, std::size_t t) const;
};

struct DenoiserConfig {
  std::size_t hidden = 16;
  std::size_t layers = 4;  // conv layers including the output layer
  std::size_t kernel = 3;
  std::size_t image_channels = 3;
  std::size_t feature_channels = 16;
  std::size_t time_dim = 16;
  std::size_t cond_dim = 16;
  bool reference_pixels = true;

  void validate() const;
};

/// Conv net: input [x_t, reference pixels, reference features]; each hidden layer
/// gets a per-channel bias from the projected time embedding, the first also from
/// the projected descriptor embedding.
class ConvDenoiser : public DenoiserModel {
 public:
  ConvDenoiser(const DenoiserConfig& cfg, std::uint64_t seed);

  const DenoiserConfig& config() const { return cfg_; }
  std::vector<Tensor>& params() override { return params_; }
  const std::vector<Tensor>& params() const override { return params_; }
  std::vector<std::string> param_names() const override;
  using DenoiserModel::predict;
  ag::Var predict(ag::Tape& tape, const std::vector<ag::Var>& weights, const ag::Var& x_t,
                  const Conditioning& cond, std::size_t t) const override;
  std::unique_ptr<DenoiserModel> clone() const override { return std::make_unique<ConvDenoiser>(*this); }

 private:
  DenoiserConfig cfg_;
  std::vector<Tensor> params_;
};

/// A training example with frozen weight maps.
struct TrainItem {
  Tensor reference, generated;
  Tensor object_mask, corruption_mask;  // S×S
  Conditioning cond;
  Tensor weight_gen;  // S×S, p̃(x_gen)
  Tensor weight_ref;  // S×S, 1 − p̃(x_ref)
};

struct BatchEntry {
  const TrainItem* item = nullptr;
  std::size_t t = 1;
  Tensor eps_gen;
  Tensor eps_ref;
};

enum class Target { kGenerated, kReference };

/// Batch mean of ‖ε − ε_θ(x(t))‖² reconstructing the chosen image (uses eps_gen
/// for the generated image, eps_ref for the reference).
ag::Var loss_mse(ag::Tape& tape, const DenoiserModel& model, const std::vector<ag::Var>& w,
                 const std::vector<BatchEntry>& batch, const DiffusionSchedule& s, Target target);

/// Image-level Diffusion-DPO with the reference image as winner and the generated
/// image as loser; both noised with eps_gen at the same t.
ag::Var loss_dpo(ag::Tape& tape, const DenoiserModel& model, const std::vector<ag::Var>& w,
                 const DenoiserModel* frozen, const std::vector<BatchEntry>& batch,
                 const DiffusionSchedule& s, double beta);

/// ‖(ε_gen − ε_θ(x_gen(t))) ⊙ w_gen‖² + ref_coeff·‖(ε_ref − ε_θ(x_ref(t))) ⊙ w_ref‖², batch mean.
ag::Var loss_patchdpo(ag::Tape& tape, const DenoiserModel& model, const std::vector<ag::Var>& w,
                      const std::vector<BatchEntry>& batch, const DiffusionSchedule& s,
                      double ref_coeff = 1.0);

enum class Objective { kMseGen, kDpo, kPatchDpo };
std::string objective_name(Objective o);
Objective parse_objective(const std::string& name);

struct TrainConfig {
  std::size_t steps = 800;
  std::size_t batch = 4;
  double learning_rate = 3e-3;
  bool lr_decay = true;  // linear decay to zero over the run
  double dpo_beta = 1.0;
  double ref_coeff = 1.0;
  std::uint64_t seed = 0;
};

struct LossRecord {
  std::size_t step;
  double loss;
};

/// Adam on the chosen objective. Examples, t and both noises are drawn from the
/// same seeded stream for every objective.
std::vector<LossRecord> train_denoiser(DenoiserModel& model, const std::vector<TrainItem>& items,
                                       Objective objective, const DiffusionSchedule& s,
                                       const TrainConfig& cfg);

struct RegionError {
  double clean = 0.0;
  double corrupt = 0.0;
};

/// Mean per-pixel channel-summed squared noise-prediction error on reference
/// reconstructions, split into corrupted pixels and clean object pixels.
RegionError eval_region_error(const DenoiserModel& model, const std::vector<TrainItem>& held_out,
                              const DiffusionSchedule& s, std::uint64_t seed, std::size_t draws = 4);

}  // namespace patchpref
