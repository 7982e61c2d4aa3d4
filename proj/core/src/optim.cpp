#include "patchpref/optim.hpp"

#include <cmath>

#include "patchpref/error.hpp"

namespace patchpref {
namespace {
void check(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) {
    throw ContractError("optimizer got " + std::to_string(params.size()) + " params and " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw DimensionError("gradient " + std::to_string(i) + " shape " +
                           shape_string(grads[i].shape()) + " vs param " +
                           shape_string(params[i]->shape()));
    }
  }
}
}  // namespace

void Sgd::step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
  check(params, grads);
  if (lr_ == 0.0) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr_ * grads[i][j];
  }
}

void Adam::step(std::vector<Tensor*> params, const std::vector<Tensor>& grads) {
  check(params, grads);
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++t_;
  if (lr_ == 0.0) return;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j];
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      p[j] -= lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_);
    }
  }
}

}  // namespace patchpref
