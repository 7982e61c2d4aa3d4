#include "patchpref/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "patchpref/error.hpp"
#include "patchpref/optim.hpp"
#include "patchpref/patch_match.hpp"

namespace patchpref {
namespace {

constexpr std::uint64_t kTemplateStream = 11;
constexpr std::uint64_t kProxyStream = 12;
constexpr std::uint64_t kHeadStream = 13;
constexpr std::uint64_t kSslStream = 14;

// U(−1/√fan_in, 1/√fan_in), the usual default for conv layers.
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = uniform(rng, -bound, bound);
  return t;
}

ag::Var activate(const ag::Var& x, Nonlinearity n) {
  return n == Nonlinearity::kRelu ? ag::relu(x) : ag::tanh(x);
}

std::vector<ag::Var> leaves(ag::Tape& tape, const std::vector<Tensor>& params) {
  std::vector<ag::Var> out;
  for (const auto& p : params) out.push_back(tape.leaf(p));
  return out;
}

std::vector<ag::Var> constants(ag::Tape& tape, const std::vector<Tensor>& params) {
  std::vector<ag::Var> out;
  for (const auto& p : params) out.push_back(tape.constant(p));
  return out;
}

ag::Var mean_square_diff(const ag::Var& a, const ag::Var& b) { return ag::mean(ag::square(ag::sub(a, b))); }

std::vector<int> random_labels(std::size_t cells, std::size_t k, Rng& rng) {
  std::vector<int> labels(cells);
  for (auto& l : labels) l = static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(k) - 1));
  return labels;
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers == 0 || channels == 0) throw ConfigError("encoder needs at least one layer and channel");
  if (kernel % 2 == 0) throw ConfigError("encoder kernel size must be odd, got " + std::to_string(kernel));
  if (patch_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " is not a multiple of patch size " +
                      std::to_string(patch_size));
  }
}

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  std::size_t in = cfg_.input_channels;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::size_t fan_in = in * cfg_.kernel * cfg_.kernel;
    params_.push_back(init_uniform({cfg_.channels, in, cfg_.kernel, cfg_.kernel}, fan_in, rng));
    params_.push_back(init_uniform({cfg_.channels}, fan_in, rng));
    in = cfg_.channels;
  }
}

std::vector<std::string> Encoder::param_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 1; l <= cfg_.layers; ++l) {
    names.push_back("conv" + std::to_string(l) + ".weight");
    names.push_back("conv" + std::to_string(l) + ".bias");
  }
  return names;
}

void Encoder::check_image(const Tensor& image) const {
  const Shape want{cfg_.input_channels, cfg_.image_size, cfg_.image_size};
  if (image.shape() != want) {
    throw ContractError("encoder expects image " + shape_string(want) + ", got " +
                        shape_string(image.shape()));
  }
}

std::vector<ag::Var> Encoder::forward(ag::Tape& tape, const ag::Var& image,
                                      const std::vector<ag::Var>& w) const {
  check_image(image.value());
  const std::size_t pad = cfg_.kernel / 2;
  ag::Var h = ag::avg_pool(image, cfg_.patch_size);
  std::vector<ag::Var> out;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    ag::Var a = activate(ag::conv2d(h, w[2 * l], w[2 * l + 1], 1, pad), cfg_.nonlinearity);
    const bool skip = cfg_.residual && h.shape()[0] == cfg_.channels;
    h = skip ? ag::add(h, a) : a;
    out.push_back(ag::normalize_cells(h, kNormEps));
  }
  (void)tape;
  return out;
}

FeaturePyramid Encoder::encode(const Tensor& image) const {
  ag::Tape tape;
  auto outs = forward(tape, tape.constant(image), constants(tape, params_));
  FeaturePyramid pyramid;
  for (const auto& v : outs) pyramid.push_back(v.value());
  return pyramid;
}

std::vector<Tensor> sample_templates(const std::vector<Tensor>& images, std::size_t count,
                                     double separation, const EncoderConfig& cfg, Rng& rng) {
  if (images.empty()) throw ContractError("template sampling needs a nonempty corpus");
  const std::size_t p = cfg.patch_size, g = cfg.grid(), c = cfg.input_channels;
  std::vector<Tensor> out;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 100000) {
      throw DivergenceError("could not find " + std::to_string(count) + " distinct templates",
                            attempts);
    }
    const Tensor& img = images[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(images.size()) - 1))];
    const std::size_t gy = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(g) - 1));
    const std::size_t gx = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(g) - 1));
    Tensor t({c, p, p});
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) t.at(ch, y, x) = img.at(ch, gy * p + y, gx * p + x);
    const bool distinct = std::all_of(out.begin(), out.end(), [&](const Tensor& q) {
      return max_abs_diff(t, q) > separation;
    });
    if (distinct) out.push_back(std::move(t));
  }
  return out;
}

Tensor tile_templates(const std::vector<Tensor>& templates, const std::vector<int>& labels,
                      const EncoderConfig& cfg) {
  const std::size_t p = cfg.patch_size, g = cfg.grid(), c = cfg.input_channels;
  Tensor img({c, cfg.image_size, cfg.image_size});
  for (std::size_t cell = 0; cell < g * g; ++cell) {
    const Tensor& t = templates[static_cast<std::size_t>(labels[cell])];
    const std::size_t y0 = (cell / g) * p, x0 = (cell % g) * p;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) img.at(ch, y0 + y, x0 + x) = t.at(ch, y, x);
  }
  return img;
}

namespace {

// Logits K×(H·W) for one tiled image.
ag::Var proxy_logits(ag::Tape& tape, const Encoder& enc, const ag::Var& image,
                     const std::vector<ag::Var>& w, const ag::Var& hw, const ag::Var& hb) {
  auto feats = enc.forward(tape, image, w);
  ag::Var logits = ag::conv2d(feats.back(), hw, hb, 1, 0);
  const auto& s = logits.shape();
  return ag::reshape(logits, {s[0], s[1] * s[2]});
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t k = logits.dim(0), n = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < k; ++i)
      if (logits.at(i, j) > logits.at(best, j)) best = i;
    correct += static_cast<int>(best) == labels[j] ? 1 : 0;
  }
  return correct;
}

}  // namespace

double proxy_accuracy(const Encoder& encoder, const Tensor& head_weight, const Tensor& head_bias,
                      const std::vector<Tensor>& templates, std::size_t images, Rng& rng) {
  const auto& cfg = encoder.config();
  const std::size_t cells = cfg.grid() * cfg.grid();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images; ++i) {
    const auto labels = random_labels(cells, templates.size(), rng);
    ag::Tape tape;
    ag::Var logits = proxy_logits(tape, encoder, tape.constant(tile_templates(templates, labels, cfg)),
                                  constants(tape, encoder.params()), tape.constant(head_weight),
                                  tape.constant(head_bias));
    correct += count_correct(logits.value(), labels);
  }
  return static_cast<double>(correct) / static_cast<double>(images * cells);
}

PretrainResult pretrain_encoder(const std::vector<Tensor>& corpus, const EncoderConfig& cfg,
                                const PretrainConfig& pcfg, std::uint64_t seed) {
  if (corpus.empty()) throw ContractError("pre-training needs a nonempty corpus");
  PretrainResult res;
  res.encoder = Encoder(cfg, seed);
  Rng trng(derive_seed(seed, kTemplateStream));
  res.templates = sample_templates(corpus, pcfg.templates, pcfg.template_separation, cfg, trng);
  Rng hrng(derive_seed(seed, kHeadStream));
  res.head_weight = init_uniform({pcfg.templates, cfg.channels, 1, 1}, cfg.channels, hrng);
  res.head_bias = init_uniform({pcfg.templates}, cfg.channels, hrng);

  std::vector<Tensor*> params;
  for (auto& p : res.encoder.params()) params.push_back(&p);
  params.push_back(&res.head_weight);
  params.push_back(&res.head_bias);
  Adam opt(pcfg.learning_rate);
  Rng rng(derive_seed(seed, kProxyStream));
  const std::size_t cells = cfg.grid() * cfg.grid();

  for (std::size_t step = 0; step < pcfg.max_steps; ++step) {
    ag::Tape tape;
    auto w = leaves(tape, res.encoder.params());
    ag::Var hw = tape.leaf(res.head_weight);
    ag::Var hb = tape.leaf(res.head_bias);
    ag::Var loss;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < pcfg.batch; ++b) {
      const auto labels = random_labels(cells, pcfg.templates, rng);
      ag::Var logits = proxy_logits(tape, res.encoder,
                                    tape.constant(tile_templates(res.templates, labels, cfg)), w, hw, hb);
      correct += count_correct(logits.value(), labels);
      ag::Var ce = ag::softmax_cross_entropy(logits, labels);
      loss = b == 0 ? ce : ag::add(loss, ce);
    }
    loss = ag::scale(loss, 1.0 / static_cast<double>(pcfg.batch));
    const double lv = loss.value().item();
    res.loss_trace.push_back(lv);
    if (!std::isfinite(lv)) throw DivergenceError("pre-training loss is not finite", step);
    res.accuracy = static_cast<double>(correct) / static_cast<double>(pcfg.batch * cells);
    res.steps = step;
    if (res.accuracy >= pcfg.target_accuracy && step > pcfg.min_steps) return res;
    tape.backward(loss);
    opt.step(params, tape.leaf_gradients());
  }
  std::ostringstream msg;
  msg << "proxy accuracy " << res.accuracy << " below " << pcfg.target_accuracy << " after "
      << pcfg.max_steps << " steps; loss trace tail:";
  const std::size_t from = res.loss_trace.size() > 5 ? res.loss_trace.size() - 5 : 0;
  for (std::size_t i = from; i < res.loss_trace.size(); ++i) msg << ' ' << res.loss_trace[i];
  throw DivergenceError(msg.str(), pcfg.max_steps);
}

namespace {

struct SslTerms {
  ag::Var l_aug, l_reg;
};

SslTerms ssl_terms(ag::Tape& tape, const Encoder& enc, const std::vector<ag::Var>& w,
                   const FeaturePyramid& frozen, const Tensor& image, Augmentation aug) {
  const GridTransform t = to_transform(aug);
  auto fx = enc.forward(tape, tape.constant(image), w);
  auto fa = enc.forward(tape, tape.constant(t.apply(image)), w);
  ag::Var la, lr;
  for (std::size_t l = 0; l < fx.size(); ++l) {
    ag::Var a = mean_square_diff(ag::grid_transform(fx[l], t), fa[l]);
    ag::Var r = mean_square_diff(fx[l], tape.constant(frozen[l]));
    la = l == 0 ? a : ag::add(la, a);
    lr = l == 0 ? r : ag::add(lr, r);
  }
  return {la, lr};
}

}  // namespace

SslLoss ssl_loss(const SslState& state, const Tensor& image, Augmentation aug) {
  ag::Tape tape;
  const auto terms = ssl_terms(tape, state.model, constants(tape, state.model.params()),
                               state.frozen.encode(image), image, aug);
  SslLoss out;
  out.l_aug = terms.l_aug.value().item();
  out.l_reg = terms.l_reg.value().item();
  out.l_self = out.l_aug + out.l_reg;
  return out;
}

std::vector<SslEpochLog> train_ssl(SslState& state, const std::vector<Tensor>& corpus,
                                   std::size_t epochs, double learning_rate, std::uint64_t seed) {
  if (epochs == 0) throw ConfigError("SSL needs at least one epoch");
  if (corpus.empty()) throw ContractError("SSL needs a nonempty corpus");
  // f_ref outputs never change, so they are computed once.
  std::vector<FeaturePyramid> frozen;
  for (const auto& img : corpus) frozen.push_back(state.frozen.encode(img));
  Rng rng(derive_seed(seed, kSslStream));
  Sgd opt(learning_rate);
  std::vector<SslEpochLog> log;
  std::size_t step = 0;
  for (std::size_t e = 0; e < epochs; ++e) {
    SslEpochLog entry;
    entry.epoch = state.epoch + 1;
    for (std::size_t i = 0; i < corpus.size(); ++i, ++step) {
      const auto aug = kAllAugmentations[uniform_int(rng, 0, 4)];
      ag::Tape tape;
      auto w = leaves(tape, state.model.params());
      const auto terms = ssl_terms(tape, state.model, w, frozen[i], corpus[i], aug);
      ag::Var loss = ag::add(terms.l_aug, terms.l_reg);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) throw DivergenceError("SSL loss is not finite at step " + std::to_string(step), step);
      entry.l_aug += terms.l_aug.value().item();
      entry.l_reg += terms.l_reg.value().item();
      tape.backward(loss);
      std::vector<Tensor*> params;
      for (auto& p : state.model.params()) params.push_back(&p);
      opt.step(params, tape.leaf_gradients());
    }
    const double n = static_cast<double>(corpus.size());
    entry.l_aug /= n;
    entry.l_reg /= n;
    entry.l_self = entry.l_aug + entry.l_reg;
    log.push_back(entry);
    ++state.epoch;
  }
  return log;
}

SslLoss mean_ssl_loss(const SslState& state, const std::vector<Tensor>& corpus) {
  SslLoss total;
  std::size_t n = 0;
  for (const auto& img : corpus) {
    for (auto aug : kAllAugmentations) {
      const auto l = ssl_loss(state, img, aug);
      total.l_aug += l.l_aug;
      total.l_reg += l.l_reg;
      ++n;
    }
  }
  total.l_aug /= static_cast<double>(n);
  total.l_reg /= static_cast<double>(n);
  total.l_self = total.l_aug + total.l_reg;
  return total;
}

std::vector<double> s_patch_per_layer(const Encoder& encoder, const CorrespondenceCorpus& corpus) {
  const std::size_t layers = encoder.config().layers;
  std::vector<std::vector<std::vector<Tensor>>> per_layer(layers);
  for (const auto& group : corpus.groups) {
    for (auto& l : per_layer) l.emplace_back();
    for (const auto& img : group.images) {
      auto pyramid = encoder.encode(img);
      for (std::size_t l = 0; l < layers; ++l) per_layer[l].back().push_back(std::move(pyramid[l]));
    }
  }
  std::vector<double> scores;
  for (const auto& feats : per_layer) scores.push_back(s_patch_features(corpus, feats));
  return scores;
}

std::size_t select_layer(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractError("select_layer needs at least one score");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

}  // namespace patchpref
