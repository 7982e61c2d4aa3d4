#pragma once

#include <cstddef>
#include <vector>

#include "patchpref/tensor.hpp"

namespace patchpref {

/// Plain gradient descent: p -= lr * g.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads);
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::vector<Tensor*> params, const std::vector<Tensor>& grads);
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace patchpref
