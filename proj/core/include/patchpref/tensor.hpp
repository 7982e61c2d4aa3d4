#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace patchpref {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. An empty shape denotes a scalar.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor filled(Shape shape, double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }
  const double* data() const noexcept { return data_.data(); }
  double* data() noexcept { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }
  double& at(std::size_t c, std::size_t h, std::size_t w) {
    return data_[(c * shape_[1] + h) * shape_[2] + w];
  }

  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor identity(std::size_t n);

/// Cross-correlation of a C×H×W input with F×C×k×k kernels.
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, std::size_t pad);

/// Nearest-neighbour upsampling of an H×W (or C×H×W) map by integer factors.
Tensor upsample_nearest(const Tensor& map, std::size_t target_h, std::size_t target_w);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
double sum(const Tensor& a);
double sum_squares(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

namespace kernels {

// C (M×N) = A (M×K) · B (K×N), optionally accumulating into C.
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C (M×N) = A (M×K) · Bᵀ where B is N×K.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);
// C (M×N) = Aᵀ · B where A is K×M and B is K×N.
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate);

// Unfolds a C×H×W image into a (C·k·k)×(H'·W') column matrix.
void im2col(const double* input, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, std::size_t out_h,
            std::size_t out_w, double* cols);
// Adjoint of im2col; accumulates into `input_grad`.
void col2im(const double* cols, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t ksize, std::size_t stride, std::size_t pad, std::size_t out_h,
            std::size_t out_w, double* input_grad);

std::size_t conv_output_size(std::size_t in, std::size_t ksize, std::size_t stride,
                             std::size_t pad);

}  // namespace kernels

}  // namespace patchpref
