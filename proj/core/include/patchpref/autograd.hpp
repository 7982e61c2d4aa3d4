#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "patchpref/grid.hpp"
#include "patchpref/tensor.hpp"

namespace patchpref::ag {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode record of primitive operations. Single-owner: one training step
/// builds one tape, calls backward once, and discards it.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A tracked input whose gradient is reported by backward().
  Var leaf(Tensor value);
  /// An untracked value; no gradient flows into it.
  Var constant(Tensor value);

  /// Records an op result. `requires_grad` should be true iff any input does.
  Var record(Tensor value, bool requires_grad, BackwardFn backward);

  const Tensor& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  /// Propagates d(loss)/d(node) to every node. `loss` must be a scalar.
  void backward(const Var& loss);

  /// Gradient of the last backward() loss w.r.t. `v` (zeros if unreached).
  Tensor grad(const Var& v) const;

  /// Gradients of all leaves, in creation order.
  std::vector<Tensor> leaf_gradients() const;

  /// Used by op backward functions to accumulate into an input's gradient.
  void accumulate(const Var& v, const Tensor& g);
  double* grad_buffer(const Var& v);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Elementwise ops (identical shapes, or one side a scalar for mul/add).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var tanh(const Var& a);
Var square(const Var& a);
/// log(sigmoid(x)) computed stably.
Var log_sigmoid(const Var& a);

// Reductions to a scalar.
Var sum(const Var& a);
Var mean(const Var& a);
Var sum_squares(const Var& a);

Var reshape(const Var& a, Shape shape);
Var matmul(const Var& a, const Var& b);

/// input C×H×W, kernels F×C×k×k, optional bias F.
Var conv2d(const Var& input, const Var& kernels, std::size_t stride, std::size_t pad);
Var conv2d(const Var& input, const Var& kernels, const Var& bias, std::size_t stride,
           std::size_t pad);

/// x C×H×W plus per-channel bias b (length C).
Var add_channel_bias(const Var& x, const Var& b);
/// C×H×W → C×(H/f)×(W/f) mean pooling over f×f blocks.
Var avg_pool(const Var& x, std::size_t factor);
/// C×h×w → C×(h·f)×(w·f) nearest-neighbour upsampling.
Var upsample(const Var& x, std::size_t factor);
Var concat_channels(std::span<const Var> parts);
/// Permutes the spatial cells of a C×H×W map.
Var grid_transform(const Var& x, const GridTransform& t);
/// Divides each spatial cell's channel vector by max(‖v‖, eps).
Var normalize_cells(const Var& x, double eps);
/// Mean softmax cross-entropy; logits K×N, one label in [0,K) per column.
Var softmax_cross_entropy(const Var& logits, std::span<const int> labels);

}  // namespace patchpref::ag
