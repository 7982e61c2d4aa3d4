#pragma once

#include <string>
#include <utility>
#include <vector>

#include "patchpref/autograd.hpp"
#include "patchpref/diffusion.hpp"
#include "test_util.hpp"

namespace patchpref::test_support {

struct GradCase {
  std::string name;
  GradCheck result;
};

namespace detail {

// Contracts an arbitrary-shaped output with fixed random coefficients to a scalar.
inline ag::Var project(ag::Tape& tape, const ag::Var& out, std::uint64_t seed) {
  Rng rng(seed);
  return ag::sum(ag::mul(out, tape.constant(standard_normal(rng, out.shape()))));
}

}  // namespace detail

/// Finite-difference check of every autograd primitive.
inline std::vector<GradCase> primitive_gradient_errors(std::uint64_t seed) {
  using namespace ag;
  Rng rng(seed);
  auto t = [&](Shape s) { return away_from_zero(rng, std::move(s)); };
  std::vector<GradCase> out;
  auto check = [&](const std::string& name, const GraphFn& f, std::vector<Tensor> inputs) {
    GraphFn projected = [f, name](Tape& tape, const std::vector<Var>& v) {
      Var r = f(tape, v);
      return r.shape().empty() ? r : detail::project(tape, r, std::hash<std::string>{}(name));
    };
    out.push_back({name, gradient_check(projected, std::move(inputs))});
  };

  check("add", [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, {t({3, 4}), t({3, 4})});
  check("add_broadcast", [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, {t({3, 4}), t({})});
  check("sub", [](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }, {t({5}), t({5})});
  check("mul", [](Tape&, const std::vector<Var>& v) { return mul(v[0], v[1]); }, {t({2, 3}), t({2, 3})});
  check("mul_broadcast", [](Tape&, const std::vector<Var>& v) { return mul(v[1], v[0]); }, {t({2, 3}), t({})});
  check("scale", [](Tape&, const std::vector<Var>& v) { return scale(v[0], -1.7); }, {t({4})});
  check("add_scalar", [](Tape&, const std::vector<Var>& v) { return add_scalar(v[0], 0.3); }, {t({4})});
  check("relu", [](Tape&, const std::vector<Var>& v) { return relu(v[0]); }, {t({3, 5})});
  check("tanh", [](Tape&, const std::vector<Var>& v) { return ag::tanh(v[0]); }, {t({3, 5})});
  check("square", [](Tape&, const std::vector<Var>& v) { return square(v[0]); }, {t({6})});
  check("log_sigmoid", [](Tape&, const std::vector<Var>& v) { return log_sigmoid(scale(v[0], 4.0)); }, {t({6})});
  check("sum", [](Tape&, const std::vector<Var>& v) { return sum(v[0]); }, {t({2, 2})});
  check("mean", [](Tape&, const std::vector<Var>& v) { return mean(v[0]); }, {t({2, 3})});
  check("sum_squares", [](Tape&, const std::vector<Var>& v) { return sum_squares(v[0]); }, {t({7})});
  check("reshape", [](Tape&, const std::vector<Var>& v) { return reshape(v[0], {3, 2}); }, {t({2, 3})});
  check("matmul", [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }, {t({3, 4}), t({4, 5})});
  check("conv2d", [](Tape&, const std::vector<Var>& v) { return conv2d(v[0], v[1], 1, 1); },
        {t({2, 5, 5}), t({3, 2, 3, 3})});
  check("conv2d_bias_stride", [](Tape&, const std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 2, 1); },
        {t({2, 7, 7}), t({2, 2, 3, 3}), t({2})});
  check("add_channel_bias", [](Tape&, const std::vector<Var>& v) { return add_channel_bias(v[0], v[1]); },
        {t({3, 2, 2}), t({3})});
  check("avg_pool", [](Tape&, const std::vector<Var>& v) { return avg_pool(v[0], 2); }, {t({2, 4, 6})});
  check("upsample", [](Tape&, const std::vector<Var>& v) { return upsample(v[0], 3); }, {t({2, 2, 2})});
  check("concat_channels",
        [](Tape&, const std::vector<Var>& v) {
          std::vector<Var> parts{v[0], v[1]};
          return concat_channels(parts);
        },
        {t({1, 3, 3}), t({2, 3, 3})});
  check("grid_transform",
        [](Tape&, const std::vector<Var>& v) { return grid_transform(v[0], GridTransform{90, true, false}); },
        {t({2, 3, 3})});
  check("normalize_cells", [](Tape&, const std::vector<Var>& v) { return normalize_cells(v[0], 1e-12); },
        {t({4, 3, 3})});
  check("softmax_cross_entropy",
        [](Tape&, const std::vector<Var>& v) {
          static const int labels[] = {0, 2, 1, 2};
          return softmax_cross_entropy(v[0], labels);
        },
        {t({3, 4})});
  check("conv_relu_mse",
        [](Tape& tape, const std::vector<Var>& v) {
          Var h = relu(conv2d(v[0], v[1], v[2], 1, 1));
          Rng target_rng(99);
          Var target = tape.constant(standard_normal(target_rng, h.shape()));
          return mean(square(sub(h, target)));
        },
        {t({2, 6, 6}), t({3, 2, 3, 3}), t({3})});
  return out;
}

/// Finite-difference check of the three training losses w.r.t. the parameters of
/// a 3-parameter linear denoiser and of a small conv denoiser.
inline std::vector<GradCase> loss_gradient_errors(std::uint64_t seed) {
  MicroSetup m = micro_setup(seed);
  Rng rng(seed);
  ThreeParamDenoiser linear(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  ThreeParamDenoiser linear_frozen(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  ConvDenoiser conv(m.cfg, seed + 1);
  ConvDenoiser conv_frozen(m.cfg, seed + 2);
  std::vector<GradCase> out;
  auto check = [&](const std::string& tag, const DenoiserModel& model, const DenoiserModel& frozen) {
    GraphFn mse = [&](ag::Tape& tape, const std::vector<ag::Var>& w) {
      return loss_mse(tape, model, w, m.batch, m.schedule, Target::kGenerated);
    };
    GraphFn dpo = [&](ag::Tape& tape, const std::vector<ag::Var>& w) {
      return loss_dpo(tape, model, w, &frozen, m.batch, m.schedule, 0.5);
    };
    GraphFn pdpo = [&](ag::Tape& tape, const std::vector<ag::Var>& w) {
      return loss_patchdpo(tape, model, w, m.batch, m.schedule, 0.7);
    };
    out.push_back({"loss_mse/" + tag, gradient_check(mse, model.params())});
    out.push_back({"loss_dpo/" + tag, gradient_check(dpo, model.params())});
    out.push_back({"loss_patchdpo/" + tag, gradient_check(pdpo, model.params())});
  };
  check("linear3", linear, linear_frozen);
  check("conv", conv, conv_frozen);
  return out;
}

}  // namespace patchpref::test_support
