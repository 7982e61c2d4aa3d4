#include "patchpref/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "patchpref/error.hpp"

namespace patchpref::ag {

const Tensor& Var::value() const { return tape_->value(*this); }

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, bool requires_grad, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss) {
  if (&loss.tape() != this) throw ContractError("loss was recorded on a different tape");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.size() != 1 || lv.rank() != 0) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(lv.shape()));
  }
  for (auto& n : nodes_) n.has_grad = false;
  Node& root = nodes_[loss.id()];
  root.grad = Tensor::scalar(1.0);
  root.has_grad = true;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Tensor(n.value.shape());
  return n.grad;
}

std::vector<Tensor> Tape::leaf_gradients() const {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf) out.push_back(grad(Var(const_cast<Tape*>(this), i)));
  }
  return out;
}

double* Tape::grad_buffer(const Var& v) {
  Node& n = nodes_[v.id()];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad.data();
}

void Tape::accumulate(const Var& v, const Tensor& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw DimensionError("gradient shape " + shape_string(g.shape()) + " does not match value " +
                         shape_string(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

namespace {

bool is_scalar(const Tensor& t) { return t.rank() == 0; }

void check_binary(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa != sb && !sa.empty() && !sb.empty()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(sa) + " vs " +
                         shape_string(sb));
  }
}

bool needs(const Var& v) { return v.tape().requires_grad(v); }

// Sums `g` down to the shape of `target` (scalar broadcast only).
Tensor reduce_to(const Tensor& g, const Tensor& target) {
  if (is_scalar(target) && !is_scalar(g)) return Tensor::scalar(patchpref::sum(g));
  return g;
}

Tensor broadcast_binary(const Tensor& a, const Tensor& b, double (*fn)(double, double)) {
  if (is_scalar(a) && !is_scalar(b)) {
    Tensor out(b.shape());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = fn(a[0], b[i]);
    return out;
  }
  Tensor out(a.shape());
  if (is_scalar(b) && !is_scalar(a)) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[0]);
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fn(a[i], b[i]);
  }
  return out;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_binary(a, b, "add");
  Tape& t = a.tape();
  Tensor out = broadcast_binary(a.value(), b.value(), [](double x, double y) { return x + y; });
  return t.record(std::move(out), needs(a) || needs(b), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, reduce_to(g, a.value()));
    tp.accumulate(b, reduce_to(g, b.value()));
  });
}

Var sub(const Var& a, const Var& b) {
  check_binary(a, b, "sub");
  Tape& t = a.tape();
  Tensor out = broadcast_binary(a.value(), b.value(), [](double x, double y) { return x - y; });
  return t.record(std::move(out), needs(a) || needs(b), [a, b](Tape& tp, const Tensor& g) {
    tp.accumulate(a, reduce_to(g, a.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, reduce_to(patchpref::scale(g, -1.0), b.value()));
  });
}

Var mul(const Var& a, const Var& b) {
  check_binary(a, b, "mul");
  Tape& t = a.tape();
  Tensor out = broadcast_binary(a.value(), b.value(), [](double x, double y) { return x * y; });
  return t.record(std::move(out), needs(a) || needs(b), [a, b](Tape& tp, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    auto times = [](double x, double y) { return x * y; };
    if (tp.requires_grad(a)) tp.accumulate(a, reduce_to(broadcast_binary(g, bv, times), av));
    if (tp.requires_grad(b)) tp.accumulate(b, reduce_to(broadcast_binary(g, av, times), bv));
  });
}

Var scale(const Var& a, double s) {
  Tape& t = a.tape();
  return t.record(patchpref::scale(a.value(), s), needs(a),
                  [a, s](Tape& tp, const Tensor& g) { tp.accumulate(a, patchpref::scale(g, s)); });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v += s;
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Tensor& g) { tp.accumulate(a, g); });
}

Var relu(const Var& a) {
  Tape& t = a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Tensor& g) {
    const Tensor& x = a.value();
    double* ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var tanh(const Var& a) {
  Tape& t = a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Tensor& g) {
    const Tensor& x = a.value();
    double* ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double y = std::tanh(x[i]);
      ga[i] += g[i] * (1.0 - y * y);
    }
  });
}

Var square(const Var& a) {
  Tape& t = a.tape();
  Tensor out = a.value();
  for (auto& v : out.values()) v *= v;
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Tensor& g) {
    const Tensor& x = a.value();
    double* ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
  });
}

Var log_sigmoid(const Var& a) {
  Tape& t = a.tape();
  Tensor out = a.value();
  // log σ(x) = min(x, 0) − log1p(exp(−|x|))
  for (auto& v : out.values()) v = std::min(v, 0.0) - std::log1p(std::exp(-std::abs(v)));
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Tensor& g) {
    const Tensor& x = a.value();
    double* ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      // d/dx log σ(x) = σ(−x)
      const double s = x[i] >= 0.0 ? std::exp(-x[i]) / (1.0 + std::exp(-x[i]))
                                   : 1.0 / (1.0 + std::exp(x[i]));
      ga[i] += g[i] * s;
    }
  });
}

Var sum(const Var& a) {
  Tape& t = a.tape();
  return t.record(Tensor::scalar(patchpref::sum(a.value())), needs(a),
                  [a](Tape& tp, const Tensor& g) {
                    double* ga = tp.grad_buffer(a);
                    const std::size_t n = a.value().size();
                    for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
                  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  Tape& t = a.tape();
  return t.record(Tensor::scalar(patchpref::sum(a.value()) / n), needs(a),
                  [a, n](Tape& tp, const Tensor& g) {
                    double* ga = tp.grad_buffer(a);
                    const std::size_t count = a.value().size();
                    for (std::size_t i = 0; i < count; ++i) ga[i] += g[0] / n;
                  });
}

Var sum_squares(const Var& a) {
  Tape& t = a.tape();
  return t.record(Tensor::scalar(patchpref::sum_squares(a.value())), needs(a),
                  [a](Tape& tp, const Tensor& g) {
                    const Tensor& x = a.value();
                    double* ga = tp.grad_buffer(a);
                    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * x[i] * g[0];
                  });
}

Var reshape(const Var& a, Shape shape) {
  Tape& t = a.tape();
  Tensor out = a.value().reshaped(std::move(shape));
  return t.record(std::move(out), needs(a), [a](Tape& tp, const Tensor& g) {
    double* ga = tp.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var matmul(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("matmul: operands on different tapes");
  Tape& t = a.tape();
  Tensor out = patchpref::matmul(a.value(), b.value());
  return t.record(std::move(out), needs(a) || needs(b), [a, b](Tape& tp, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (tp.requires_grad(a)) kernels::gemm_nt(m, k, n, g.data(), bv.data(), tp.grad_buffer(a), true);
    if (tp.requires_grad(b)) kernels::gemm_tn(k, n, m, av.data(), g.data(), tp.grad_buffer(b), true);
  });
}

namespace {

Var conv2d_impl(const Var& input, const Var& kernels, const Var* bias, std::size_t stride,
                std::size_t pad) {
  const Tensor& x = input.value();
  const Tensor& w = kernels.value();
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != x.dim(0) || w.dim(2) != w.dim(3)) {
    throw DimensionError("conv2d shape mismatch: input " + shape_string(x.shape()) + ", kernels " +
                         shape_string(w.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t f = w.dim(0), k = w.dim(2);
  const std::size_t oh = kernels::conv_output_size(h, k, stride, pad);
  const std::size_t ow = kernels::conv_output_size(wd, k, stride, pad);
  if (bias && (bias->value().rank() != 1 || bias->value().dim(0) != f)) {
    throw DimensionError("conv2d bias shape " + shape_string(bias->value().shape()) +
                         " does not match " + std::to_string(f) + " filters");
  }
  auto cols = std::make_shared<std::vector<double>>(c * k * k * oh * ow);
  kernels::im2col(x.data(), c, h, wd, k, stride, pad, oh, ow, cols->data());
  Tensor out({f, oh, ow});
  kernels::gemm_nn(f, oh * ow, c * k * k, w.data(), cols->data(), out.data(), false);
  if (bias) {
    const Tensor& bv = bias->value();
    for (std::size_t fi = 0; fi < f; ++fi) {
      double* row = out.data() + fi * oh * ow;
      for (std::size_t i = 0; i < oh * ow; ++i) row[i] += bv[fi];
    }
  }
  Tape& t = input.tape();
  const bool rg = needs(input) || needs(kernels) || (bias && needs(*bias));
  Var b = bias ? *bias : Var();
  return t.record(std::move(out), rg,
                  [input, kernels, b, cols, c, h, wd, f, k, oh, ow, stride, pad](Tape& tp,
                                                                                 const Tensor& g) {
                    const std::size_t plane = oh * ow;
                    const std::size_t ckk = c * k * k;
                    if (tp.requires_grad(kernels)) {
                      kernels::gemm_nt(f, ckk, plane, g.data(), cols->data(),
                                       tp.grad_buffer(kernels), true);
                    }
                    if (b.valid() && tp.requires_grad(b)) {
                      double* gb = tp.grad_buffer(b);
                      for (std::size_t fi = 0; fi < f; ++fi) {
                        double acc = 0.0;
                        const double* row = g.data() + fi * plane;
                        for (std::size_t i = 0; i < plane; ++i) acc += row[i];
                        gb[fi] += acc;
                      }
                    }
                    if (tp.requires_grad(input)) {
                      std::vector<double> dcols(ckk * plane);
                      kernels::gemm_tn(ckk, plane, f, kernels.value().data(), g.data(),
                                       dcols.data(), false);
                      kernels::col2im(dcols.data(), c, h, wd, k, stride, pad, oh, ow,
                                      tp.grad_buffer(input));
                    }
                  });
}

}  // namespace

Var conv2d(const Var& input, const Var& kernels, std::size_t stride, std::size_t pad) {
  return conv2d_impl(input, kernels, nullptr, stride, pad);
}

Var conv2d(const Var& input, const Var& kernels, const Var& bias, std::size_t stride,
           std::size_t pad) {
  return conv2d_impl(input, kernels, &bias, stride, pad);
}

Var add_channel_bias(const Var& x, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 3 || bv.rank() != 1 || bv.dim(0) != xv.dim(0)) {
    throw DimensionError("add_channel_bias shape mismatch: " + shape_string(xv.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  const std::size_t c = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
  Tensor out = xv;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) out[ci * plane + i] += bv[ci];
  Tape& t = x.tape();
  return t.record(std::move(out), needs(x) || needs(b), [x, b, c, plane](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(x)) {
      double* gx = tp.grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(b)) {
      double* gb = tp.grad_buffer(b);
      for (std::size_t ci = 0; ci < c; ++ci) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += g[ci * plane + i];
        gb[ci] += acc;
      }
    }
  });
}

Var avg_pool(const Var& x, std::size_t factor) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || factor == 0 || xv.dim(1) % factor || xv.dim(2) % factor) {
    throw ConfigError("avg_pool factor " + std::to_string(factor) + " does not divide " +
                      shape_string(xv.shape()));
  }
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const std::size_t oh = h / factor, ow = w / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  Tensor out({c, oh, ow});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx)
        out[(ci * oh + y / factor) * ow + xx / factor] += xv[(ci * h + y) * w + xx] * inv;
  Tape& t = x.tape();
  return t.record(std::move(out), needs(x), [x, c, h, w, oh, ow, factor, inv](Tape& tp, const Tensor& g) {
    double* gx = tp.grad_buffer(x);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          gx[(ci * h + y) * w + xx] += g[(ci * oh + y / factor) * ow + xx / factor] * inv;
  });
}

Var upsample(const Var& x, std::size_t factor) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || factor == 0) {
    throw ConfigError("upsample expects C×H×W and a positive factor, got " + shape_string(xv.shape()));
  }
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  Tensor out = upsample_nearest(xv, h * factor, w * factor);
  Tape& t = x.tape();
  return t.record(std::move(out), needs(x), [x, c, h, w, factor](Tape& tp, const Tensor& g) {
    double* gx = tp.grad_buffer(x);
    const std::size_t th = h * factor, tw = w * factor;
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t y = 0; y < th; ++y)
        for (std::size_t xx = 0; xx < tw; ++xx)
          gx[(ci * h + y / factor) * w + xx / factor] += g[(ci * th + y) * tw + xx];
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_channels needs at least one input");
  const Tensor& first = parts[0].value();
  if (first.rank() != 3) throw DimensionError("concat_channels expects C×H×W inputs");
  const std::size_t h = first.dim(1), w = first.dim(2);
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    if (v.rank() != 3 || v.dim(1) != h || v.dim(2) != w) {
      throw DimensionError("concat_channels spatial mismatch: " + shape_string(first.shape()) +
                           " vs " + shape_string(v.shape()));
    }
    total += v.dim(0);
    rg = rg || needs(p);
  }
  Tensor out({total, h, w});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    offset += v.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Tape& t = parts[0].tape();
  return t.record(std::move(out), rg, [inputs](Tape& tp, const Tensor& g) {
    std::size_t off = 0;
    for (const auto& p : inputs) {
      const std::size_t n = p.value().size();
      if (tp.requires_grad(p)) {
        double* gp = tp.grad_buffer(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var grid_transform(const Var& x, const GridTransform& tr) {
  const Tensor& xv = x.value();
  Tensor out = tr.apply(xv);
  const std::size_t side = xv.dim(xv.rank() - 1);
  Tape& t = x.tape();
  return t.record(std::move(out), needs(x), [x, tr, side](Tape& tp, const Tensor& g) {
    const auto perm = tr.permutation(side);
    const std::size_t plane = side * side;
    const std::size_t planes = g.size() / plane;
    double* gx = tp.grad_buffer(x);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += g[p * plane + perm[i]];
  });
}

Var normalize_cells(const Var& x, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw DimensionError("normalize_cells expects C×H×W, got " + shape_string(xv.shape()));
  const std::size_t c = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
  std::vector<double> norms(plane, 0.0);
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) norms[i] += xv[ci * plane + i] * xv[ci * plane + i];
  for (auto& n : norms) n = std::sqrt(n);
  Tensor out = xv;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t i = 0; i < plane; ++i) out[ci * plane + i] /= std::max(norms[i], eps);
  Tape& t = x.tape();
  return t.record(std::move(out), needs(x), [x, c, plane, norms, eps](Tape& tp, const Tensor& g) {
    const Tensor& v = x.value();
    double* gx = tp.grad_buffer(x);
    for (std::size_t i = 0; i < plane; ++i) {
      if (norms[i] <= eps) {
        for (std::size_t ci = 0; ci < c; ++ci) gx[ci * plane + i] += g[ci * plane + i] / eps;
        continue;
      }
      // d(v/‖v‖) = (g − u (u·g)) / ‖v‖ with u = v/‖v‖
      double dot = 0.0;
      for (std::size_t ci = 0; ci < c; ++ci) dot += v[ci * plane + i] * g[ci * plane + i];
      const double n = norms[i];
      for (std::size_t ci = 0; ci < c; ++ci) {
        gx[ci * plane + i] += (g[ci * plane + i] - v[ci * plane + i] * dot / (n * n)) / n;
      }
    }
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.dim(1) != labels.size()) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_string(z.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = z.dim(0), n = z.dim(1);
  auto probs = std::make_shared<std::vector<double>>(k * n);
  double loss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const int label = labels[j];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ContractError("label " + std::to_string(label) + " outside [0," + std::to_string(k) + ")");
    }
    double m = z[j];
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, z[i * n + j]);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double e = std::exp(z[i * n + j] - m);
      (*probs)[i * n + j] = e;
      total += e;
    }
    for (std::size_t i = 0; i < k; ++i) (*probs)[i * n + j] /= total;
    loss -= std::log((*probs)[static_cast<std::size_t>(label) * n + j]);
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  Tape& t = logits.tape();
  return t.record(Tensor::scalar(loss), needs(logits), [logits, probs, lab, k, n](Tape& tp, const Tensor& g) {
    double* gz = tp.grad_buffer(logits);
    const double s = g[0] / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < k; ++i) {
        const double target = static_cast<std::size_t>(lab[j]) == i ? 1.0 : 0.0;
        gz[i * n + j] += s * ((*probs)[i * n + j] - target);
      }
    }
  });
}

}  // namespace patchpref::ag
