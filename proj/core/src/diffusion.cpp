#include "patchpref/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "patchpref/error.hpp"
#include "patchpref/optim.hpp"
#include "patchpref/rng.hpp"

namespace patchpref {
namespace {

constexpr std::uint64_t kTrainStream = 21;
constexpr std::uint64_t kEvalStream = 22;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = uniform(rng, -bound, bound);
  return t;
}

// S×S weight map repeated over `channels`.
Tensor broadcast_channels(const Tensor& map, std::size_t channels) {
  Tensor out({channels, map.dim(0), map.dim(1)});
  for (std::size_t c = 0; c < channels; ++c)
    std::copy(map.data(), map.data() + map.size(), out.data() + c * map.size());
  return out;
}

ag::Var squared_error(ag::Tape& tape, const DenoiserModel& model, const std::vector<ag::Var>& w,
                      const Tensor& x0, const Tensor& eps, const BatchEntry& e,
                      const DiffusionSchedule& s) {
  ag::Var xt = tape.constant(forward_noise(x0, e.t, eps, s));
  ag::Var pred = model.predict(tape, w, xt, e.item->cond, e.t);
  return ag::sum_squares(ag::sub(tape.constant(eps), pred));
}

std::vector<ag::Var> constants(ag::Tape& tape, const std::vector<Tensor>& params) {
  std::vector<ag::Var> out;
  for (const auto& p : params) out.push_back(tape.constant(p));
  return out;
}

void check_batch(const std::vector<BatchEntry>& batch, const DiffusionSchedule& s) {
  if (batch.empty()) throw ContractError("empty training batch");
  for (const auto& e : batch) {
    if (!e.item) throw ContractError("batch entry without an item");
    if (e.t > s.steps) throw ContractError("time step " + std::to_string(e.t) + " beyond schedule");
  }
}

}  // namespace

DiffusionSchedule make_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 2) throw ConfigError("diffusion needs T >= 2, got " + std::to_string(steps));
  DiffusionSchedule s;
  s.steps = steps;
  s.alpha.assign(steps + 1, 1.0);
  s.sigma.assign(steps + 1, 0.0);
  // the beta range is given for a 1000-step chain; shorter chains take larger
  // steps, capped below 1 so very short chains stay defined
  const double k = 1000.0 / static_cast<double>(steps);
  double prod = 1.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double beta = std::min(0.999, k * (beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                                               static_cast<double>(steps - 1)));
    prod *= 1.0 - beta;
    s.alpha[i + 1] = std::sqrt(prod);
    s.sigma[i + 1] = std::sqrt(1.0 - prod);
  }
  return s;
}

Tensor forward_noise(const Tensor& x0, std::size_t t, const Tensor& eps, const DiffusionSchedule& s) {
  if (x0.shape() != eps.shape()) {
    throw ContractError("noise shape " + shape_string(eps.shape()) + " vs image " + shape_string(x0.shape()));
  }
  if (t > s.steps) throw ContractError("time step " + std::to_string(t) + " beyond T=" + std::to_string(s.steps));
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.alpha[t] * x0[i] + s.sigma[t] * eps[i];
  return out;
}

Tensor descriptor_embedding(const SceneDescriptor& d, std::size_t dim) {
  Rng rng(fnv1a(d.to_text()));
  Tensor e({dim});
  for (auto& v : e.values()) v = uniform(rng, -1.0, 1.0);
  return e;
}

Tensor time_embedding(std::size_t t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor e({dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(1000.0) * static_cast<double>(i) / static_cast<double>(half));
    e[i] = std::sin(static_cast<double>(t) * freq);
    e[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return e;
}

Tensor DenoiserModel::predict(const Tensor& x_t, const Conditioning& cond, std::size_t t) const {
  ag::Tape tape;
  return predict(tape, constants(tape, params()), tape.constant(x_t), cond, t).value();
}

void DenoiserConfig::validate() const {
  if (layers < 2) throw ConfigError("denoiser needs at least 2 conv layers");
  if (kernel % 2 == 0) throw ConfigError("denoiser kernel must be odd");
  if (time_dim % 2 != 0) throw ConfigError("time embedding dimension must be even");
}

ConvDenoiser::ConvDenoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t k2 = cfg_.kernel * cfg_.kernel;
  std::size_t in = cfg_.image_channels + (cfg_.reference_pixels ? cfg_.image_channels : 0) +
                   cfg_.feature_channels;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::size_t out = l + 1 == cfg_.layers ? cfg_.image_channels : cfg_.hidden;
    params_.push_back(init_uniform({out, in, cfg_.kernel, cfg_.kernel}, in * k2, rng));
    params_.push_back(init_uniform({out}, in * k2, rng));
    in = out;
  }
  for (std::size_t l = 0; l + 1 < cfg_.layers; ++l)
    params_.push_back(init_uniform({cfg_.hidden, cfg_.time_dim}, cfg_.time_dim, rng));
  params_.push_back(init_uniform({cfg_.hidden, cfg_.cond_dim}, cfg_.cond_dim, rng));
}

std::vector<std::string> ConvDenoiser::param_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 1; l <= cfg_.layers; ++l) {
    names.push_back("conv" + std::to_string(l) + ".weight");
    names.push_back("conv" + std::to_string(l) + ".bias");
  }
  for (std::size_t l = 1; l < cfg_.layers; ++l) names.push_back("time" + std::to_string(l) + ".proj");
  names.push_back("cond.proj");
  return names;
}

ag::Var ConvDenoiser::predict(ag::Tape& tape, const std::vector<ag::Var>& w, const ag::Var& x_t,
                              const Conditioning& cond, std::size_t t) const {
  const std::size_t pad = cfg_.kernel / 2;
  std::vector<ag::Var> inputs{x_t};
  if (cfg_.reference_pixels) inputs.push_back(tape.constant(cond.reference));
  inputs.push_back(tape.constant(cond.features));
  ag::Var h = ag::concat_channels(inputs);
  ag::Var temb = tape.constant(time_embedding(t, cfg_.time_dim).reshaped({cfg_.time_dim, 1}));
  ag::Var cemb = tape.constant(cond.embedding.reshaped({cfg_.cond_dim, 1}));
  const std::size_t conv_params = 2 * cfg_.layers;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    h = ag::conv2d(h, w[2 * l], w[2 * l + 1], 1, pad);
    if (l + 1 == cfg_.layers) break;
    ag::Var bias = ag::matmul(w[conv_params + l], temb);
    if (l == 0) bias = ag::add(bias, ag::matmul(w[conv_params + cfg_.layers - 1], cemb));
    h = ag::relu(ag::add_channel_bias(h, ag::reshape(bias, {cfg_.hidden})));
  }
  return h;
}

ag::Var loss_mse(ag::Tape& tape, const DenoiserModel& model, const std::vector<ag::Var>& w,
                 const std::vector<BatchEntry>& batch, const DiffusionSchedule& s, Target target) {
  check_batch(batch, s);
  ag::Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch[i];
    const bool gen = target == Target::kGenerated;
    ag::Var err = squared_error(tape, model, w, gen ? e.item->generated : e.item->reference,
                                gen ? e.eps_gen : e.eps_ref, e, s);
    total = i == 0 ? err : ag::add(total, err);
  }
  return ag::scale(total, 1.0 / static_cast<double>(batch.size()));
}

ag::Var loss_dpo(ag::Tape& tape, const DenoiserModel& model, const std::vector<ag::Var>& w,
                 const DenoiserModel* frozen, const std::vector<BatchEntry>& batch,
                 const DiffusionSchedule& s, double beta) {
  if (!frozen) throw ContractError("DPO loss needs the frozen reference denoiser");
  check_batch(batch, s);
  const auto fw = constants(tape, frozen->params());
  ag::Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch[i];
    ag::Var ew = squared_error(tape, model, w, e.item->reference, e.eps_gen, e, s);
    ag::Var el = squared_error(tape, model, w, e.item->generated, e.eps_gen, e, s);
    ag::Var rw = squared_error(tape, *frozen, fw, e.item->reference, e.eps_gen, e, s);
    ag::Var rl = squared_error(tape, *frozen, fw, e.item->generated, e.eps_gen, e, s);
    ag::Var margin = ag::sub(ag::sub(ew, rw), ag::sub(el, rl));
    ag::Var term = ag::scale(ag::log_sigmoid(ag::scale(margin, -beta)), -1.0);
    total = i == 0 ? term : ag::add(total, term);
  }
  return ag::scale(total, 1.0 / static_cast<double>(batch.size()));
}

ag::Var loss_patchdpo(ag::Tape& tape, const DenoiserModel& model, const std::vector<ag::Var>& w,
                      const std::vector<BatchEntry>& batch, const DiffusionSchedule& s,
                      double ref_coeff) {
  check_batch(batch, s);
  ag::Var total;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch[i];
    const TrainItem& it = *e.item;
    const Shape pixel_shape{it.reference.dim(1), it.reference.dim(2)};
    if (it.weight_gen.shape() != pixel_shape || it.weight_ref.shape() != pixel_shape) {
      throw ContractError("weight maps " + shape_string(it.weight_gen.shape()) + "/" +
                          shape_string(it.weight_ref.shape()) + " do not match image " +
                          shape_string(pixel_shape));
    }
    const std::size_t c = it.reference.dim(0);
    auto weighted = [&](const Tensor& x0, const Tensor& eps, const Tensor& weight) {
      ag::Var xt = tape.constant(forward_noise(x0, e.t, eps, s));
      ag::Var diff = ag::sub(tape.constant(eps), model.predict(tape, w, xt, it.cond, e.t));
      return ag::sum_squares(ag::mul(diff, tape.constant(broadcast_channels(weight, c))));
    };
    ag::Var term = ag::add(weighted(it.generated, e.eps_gen, it.weight_gen),
                           ag::scale(weighted(it.reference, e.eps_ref, it.weight_ref), ref_coeff));
    total = i == 0 ? term : ag::add(total, term);
  }
  return ag::scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::kMseGen: return "mse_gen";
    case Objective::kDpo: return "dpo";
    case Objective::kPatchDpo: return "patchdpo";
  }
  return "?";
}

Objective parse_objective(const std::string& name) {
  for (auto o : {Objective::kMseGen, Objective::kDpo, Objective::kPatchDpo})
    if (objective_name(o) == name) return o;
  throw ConfigError("unknown objective '" + name + "' (expected mse_gen, dpo or patchdpo)");
}

std::vector<LossRecord> train_denoiser(DenoiserModel& model, const std::vector<TrainItem>& items,
                                       Objective objective, const DiffusionSchedule& s,
                                       const TrainConfig& cfg) {
  if (items.empty()) throw ContractError("denoiser training needs a nonempty corpus");
  if (cfg.batch == 0) throw ConfigError("batch size must be positive");
  const auto frozen = model.clone();
  Adam opt(cfg.learning_rate);
  Rng rng(derive_seed(cfg.seed, kTrainStream));
  std::vector<LossRecord> trace;
  const Shape image_shape = items.front().reference.shape();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<BatchEntry> batch(cfg.batch);
    for (auto& e : batch) {
      e.item = &items[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(items.size()) - 1))];
      e.t = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(s.steps)));
      e.eps_gen = standard_normal(rng, image_shape);
      e.eps_ref = standard_normal(rng, image_shape);
    }
    ag::Tape tape;
    std::vector<ag::Var> w;
    for (const auto& p : model.params()) w.push_back(tape.leaf(p));
    ag::Var loss;
    switch (objective) {
      case Objective::kMseGen: loss = loss_mse(tape, model, w, batch, s, Target::kGenerated); break;
      case Objective::kDpo: loss = loss_dpo(tape, model, w, frozen.get(), batch, s, cfg.dpo_beta); break;
      case Objective::kPatchDpo: loss = loss_patchdpo(tape, model, w, batch, s, cfg.ref_coeff); break;
    }
    const double lv = loss.value().item();
    if (!std::isfinite(lv)) {
      throw DivergenceError(objective_name(objective) + " loss is not finite at step " + std::to_string(step), step);
    }
    trace.push_back({step, lv});
    tape.backward(loss);
    if (cfg.lr_decay) {
      opt.set_lr(cfg.learning_rate * (1.0 - static_cast<double>(step) / static_cast<double>(cfg.steps)));
    }
    std::vector<Tensor*> params;
    for (auto& p : model.params()) params.push_back(&p);
    opt.step(params, tape.leaf_gradients());
  }
  return trace;
}

RegionError eval_region_error(const DenoiserModel& model, const std::vector<TrainItem>& held_out,
                              const DiffusionSchedule& s, std::uint64_t seed, std::size_t draws) {
  Rng rng(derive_seed(seed, kEvalStream));
  double clean_sum = 0.0, corrupt_sum = 0.0;
  std::size_t clean_n = 0, corrupt_n = 0;
  for (const auto& it : held_out) {
    const std::size_t c = it.reference.dim(0), h = it.reference.dim(1), wd = it.reference.dim(2);
    for (std::size_t d = 0; d < draws; ++d) {
      const auto t = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(s.steps)));
      const Tensor eps = standard_normal(rng, it.reference.shape());
      const Tensor pred = model.predict(forward_noise(it.reference, t, eps, s), it.cond, t);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < wd; ++x) {
          if (it.object_mask.at(y, x) <= 0.5) continue;
          double err = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double diff = eps.at(ch, y, x) - pred.at(ch, y, x);
            err += diff * diff;
          }
          if (it.corruption_mask.at(y, x) > 0.5) {
            corrupt_sum += err;
            ++corrupt_n;
          } else {
            clean_sum += err;
            ++clean_n;
          }
        }
      }
    }
  }
  RegionError out;
  out.clean = clean_n ? clean_sum / static_cast<double>(clean_n) : 0.0;
  out.corrupt = corrupt_n ? corrupt_sum / static_cast<double>(corrupt_n) : 0.0;
  return out;
}

}  // namespace patchpref
