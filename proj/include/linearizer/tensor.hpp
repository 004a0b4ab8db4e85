#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace linearizer {

using Shape = std::vector<std::size_t>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
// Aligned for the widest SIMD width Eigen was built with. With plain
// std::vector storage Eigen peels a data-dependent prefix and results vary in
// the last bit between otherwise identical runs.
using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

// Dense row-major array of doubles. Most of the library works with rank-2
// tensors where rows index samples and columns index coordinates; a rank-1
// tensor of length n is viewed as a 1 x n row by rows()/cols().
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, const std::vector<double>& data);
  Tensor(Shape shape, std::span<const double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor filled(std::size_t rows, std::size_t cols, double v) { return Tensor({rows, cols}, v); }
  static Tensor identity(std::size_t n);
  static Tensor scalar(double v) { return Tensor({1, 1}, v); }
  // A single row vector (shape {1, n}).
  static Tensor row(std::vector<double> values);
  // Nested initializer, one inner list per row.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor from_eigen(const RowMatrix& m);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : rows_other_rank(); }
  std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : cols_other_rank(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  MatrixMap as_matrix();
  ConstMatrixMap as_matrix() const;
  RowMatrix to_eigen() const { return as_matrix(); }

  // Copy of row r as a {1, cols} tensor.
  Tensor row_at(std::size_t r) const;
  double item() const;

  bool all_finite() const noexcept;
  double max_abs() const noexcept;
  double frobenius() const noexcept;

  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::size_t rows_other_rank() const;
  std::size_t cols_other_rank() const;

  Shape shape_;
  Storage data_;
};

std::size_t shape_product(const Shape& shape);

// Plain (non-differentiable) helpers used by evaluation code and tests.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
// max_i |a_i - b_i|; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
// Stack rows of equal width into one tensor.
Tensor vstack(const std::vector<Tensor>& parts);

}  // namespace linearizer
