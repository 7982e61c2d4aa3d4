#include "patchpref/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <numeric>
#include <sstream>

#include "patchpref/error.hpp"

namespace patchpref {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape_));
  }
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on non-scalar tensor " + shape_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace kernels {

namespace {
constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockN = 256;

using v4d = double __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof v); }

// C[i0..i0+4, j0..j0+8) += A[i0..i0+4, p0..p1) · B[p0..p1, j0..j0+8), accumulated in registers.
inline void micro_4x8(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                      std::size_t i0, std::size_t p0, std::size_t p1, std::size_t j0) {
  double* c0 = c + i0 * n + j0;
  v4d acc00 = load4(c0), acc01 = load4(c0 + 4);
  v4d acc10 = load4(c0 + n), acc11 = load4(c0 + n + 4);
  v4d acc20 = load4(c0 + 2 * n), acc21 = load4(c0 + 2 * n + 4);
  v4d acc30 = load4(c0 + 3 * n), acc31 = load4(c0 + 3 * n + 4);
  const double* a0 = a + i0 * k;
  for (std::size_t p = p0; p < p1; ++p) {
    const double* brow = b + p * n + j0;
    const v4d b0 = load4(brow), b1 = load4(brow + 4);
    const double x0 = a0[p], x1 = a0[k + p], x2 = a0[2 * k + p], x3 = a0[3 * k + p];
    acc00 += x0 * b0; acc01 += x0 * b1;
    acc10 += x1 * b0; acc11 += x1 * b1;
    acc20 += x2 * b0; acc21 += x2 * b1;
    acc30 += x3 * b0; acc31 += x3 * b1;
  }
  store4(c0, acc00); store4(c0 + 4, acc01);
  store4(c0 + n, acc10); store4(c0 + n + 4, acc11);
  store4(c0 + 2 * n, acc20); store4(c0 + 2 * n + 4, acc21);
  store4(c0 + 3 * n, acc30); store4(c0 + 3 * n + 4, acc31);
}

// Scalar edge handler for the rows/columns the 4x8 tiles do not cover.
inline void edge_block(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                       std::size_t i0, std::size_t i1, std::size_t p0, std::size_t p1,
                       std::size_t j0, std::size_t j1) {
  for (std::size_t i = i0; i < i1; ++i) {
    double* __restrict crow = c + i * n;
    for (std::size_t p = p0; p < p1; ++p) {
      const double av = a[i * k + p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  const std::size_t m4 = m - m % 4;
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t j1 = std::min(n, j0 + kBlockN);
    const std::size_t j8 = j0 + (j1 - j0) - (j1 - j0) % 8;
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t p1 = std::min(k, p0 + kBlockK);
      for (std::size_t i = 0; i < m4; i += 4) {
        for (std::size_t j = j0; j < j8; j += 8) micro_4x8(n, k, a, b, c, i, p0, p1, j);
        if (j8 < j1) edge_block(n, k, a, b, c, i, i + 4, p0, p1, j8, j1);
      }
      if (m4 < m) edge_block(n, k, a, b, c, m4, m, p0, p1, j0, j1);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  // Both operands are read along contiguous rows; each C entry is a dot product.
  const std::size_t k4 = k - k % 4;
  auto dot = [&](std::size_t i, std::size_t j) {
    const double* x = a + i * k;
    const double* y = b + j * k;
    v4d acc = {0, 0, 0, 0};
    for (std::size_t p = 0; p < k4; p += 4) acc += load4(x + p) * load4(y + p);
    double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (std::size_t p = k4; p < k; ++p) s += x[p] * y[p];
    return s;
  };
  const std::size_t m2 = m - m % 2;
  const std::size_t n2 = n - n % 2;
  for (std::size_t i = 0; i < m2; i += 2) {
    const double* x0 = a + i * k;
    const double* x1 = x0 + k;
    for (std::size_t j = 0; j < n2; j += 2) {
      const double* y0 = b + j * k;
      const double* y1 = y0 + k;
      v4d s00 = {0, 0, 0, 0}, s01 = s00, s10 = s00, s11 = s00;
      for (std::size_t p = 0; p < k4; p += 4) {
        const v4d u0 = load4(x0 + p), u1 = load4(x1 + p);
        const v4d w0 = load4(y0 + p), w1 = load4(y1 + p);
        s00 += u0 * w0; s01 += u0 * w1;
        s10 += u1 * w0; s11 += u1 * w1;
      }
      double r[4] = {(s00[0] + s00[1]) + (s00[2] + s00[3]), (s01[0] + s01[1]) + (s01[2] + s01[3]),
                     (s10[0] + s10[1]) + (s10[2] + s10[3]), (s11[0] + s11[1]) + (s11[2] + s11[3])};
      for (std::size_t p = k4; p < k; ++p) {
        r[0] += x0[p] * y0[p];
        r[1] += x0[p] * y1[p];
        r[2] += x1[p] * y0[p];
        r[3] += x1[p] * y1[p];
      }
      double* c0 = c + i * n + j;
      double* c1 = c0 + n;
      if (accumulate) {
        c0[0] += r[0]; c0[1] += r[1]; c1[0] += r[2]; c1[1] += r[3];
      } else {
        c0[0] = r[0]; c0[1] = r[1]; c1[0] = r[2]; c1[1] = r[3];
      }
    }
    for (std::size_t j = n2; j < n; ++j) {
      c[i * n + j] = (accumulate ? c[i * n + j] : 0.0) + dot(i, j);
      c[(i + 1) * n + j] = (accumulate ? c[(i + 1) * n + j] : 0.0) + dot(i + 1, j);
    }
  }
  for (std::size_t i = m2; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = (accumulate ? c[i * n + j] : 0.0) + dot(i, j);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  // Transposing A (K×M → M×K) reuses the same kernel.
  std::vector<double> at(m * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
  gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

std::size_t conv_output_size(std::size_t in, std::size_t ksize, std::size_t stride,
                             std::size_t pad) {
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  if (ksize % 2 == 0) throw ConfigError("conv2d kernel size must be odd, got " + std::to_string(ksize));
  const std::size_t padded = in + 2 * pad;
  if (padded < ksize) throw ConfigError("conv2d kernel larger than padded input");
  if ((padded - ksize) % stride != 0) {
    throw ConfigError("conv2d output size (" + std::to_string(in) + "+2*" + std::to_string(pad) +
                      "-" + std::to_string(ksize) + ")/" + std::to_string(stride) +
                      " is not integral");
  }
  return (padded - ksize) / stride + 1;
}

void im2col(const double* input, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, std::size_t out_h,
            std::size_t out_w, double* cols) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = input + c * height * width;
    for (std::size_t ky = 0; ky < ksize; ++ky) {
      for (std::size_t kx = 0; kx < ksize; ++kx) {
        double* dst = cols + ((c * ksize + ky) * ksize + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          double* drow = dst + oy * out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(drow, drow + out_w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(iy) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width))
                           ? 0.0
                           : srow[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, std::size_t out_h,
            std::size_t out_w, double* input_grad) {
  const std::size_t plane = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = input_grad + c * height * width;
    for (std::size_t ky = 0; ky < ksize; ++ky) {
      for (std::size_t kx = 0; kx < ksize; ++kx) {
        const double* src = cols + ((c * ksize + ky) * ksize + kx) * plane;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          double* drow = dst + static_cast<std::size_t>(iy) * width;
          const double* srow = src + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            drow[static_cast<std::size_t>(ix)] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor c({a.dim(0), b.dim(1)});
  kernels::gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), c.data(), false);
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects a matrix, got " + shape_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

Tensor identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t[i * n + i] = 1.0;
  return t;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad) {
  if (input.rank() != 3 || kernels.rank() != 4 || kernels.dim(1) != input.dim(0) ||
      kernels.dim(2) != kernels.dim(3)) {
    throw DimensionError("conv2d shape mismatch: input " + shape_string(input.shape()) +
                         ", kernels " + shape_string(kernels.shape()));
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t f = kernels.dim(0), k = kernels.dim(2);
  const std::size_t oh = kernels::conv_output_size(h, k, stride, pad);
  const std::size_t ow = kernels::conv_output_size(w, k, stride, pad);
  std::vector<double> cols(c * k * k * oh * ow);
  kernels::im2col(input.data(), c, h, w, k, stride, pad, oh, ow, cols.data());
  Tensor out({f, oh, ow});
  kernels::gemm_nn(f, oh * ow, c * k * k, kernels.data(), cols.data(), out.data(), false);
  return out;
}

Tensor upsample_nearest(const Tensor& map, std::size_t target_h, std::size_t target_w) {
  if (map.rank() != 2 && map.rank() != 3) {
    throw DimensionError("upsample_nearest expects H×W or C×H×W, got " + shape_string(map.shape()));
  }
  const std::size_t channels = map.rank() == 3 ? map.dim(0) : 1;
  const std::size_t h = map.dim(map.rank() - 2), w = map.dim(map.rank() - 1);
  if (target_h < h || target_w < w || target_h % h != 0 || target_w % w != 0) {
    throw ConfigError("upsample target " + std::to_string(target_h) + "x" +
                      std::to_string(target_w) + " is not an integer multiple of " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t fy = target_h / h, fx = target_w / w;
  Shape shape = map.rank() == 3 ? Shape{channels, target_h, target_w} : Shape{target_h, target_w};
  Tensor out(shape);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < target_h; ++y)
      for (std::size_t x = 0; x < target_w; ++x)
        out[(c * target_h + y) * target_w + x] = map[(c * h + y / fy) * w + x / fx];
  return out;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.values()) v *= s;
  return out;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return acc;
}

double sum_squares(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return acc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace patchpref
