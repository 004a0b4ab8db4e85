#include "linearizer/tensor.hpp"

#include "linearizer/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace linearizer {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, const std::vector<double>& data)
    : Tensor(std::move(shape), std::span<const double>(data)) {}

Tensor::Tensor(Shape shape, std::span<const double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string() + " does not hold " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix initializer");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::from_eigen(const RowMatrix& m) {
  Tensor t = zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  t.as_matrix() = m;
  return t;
}

std::size_t Tensor::rows_other_rank() const {
  if (shape_.size() == 1) return 1;
  throw DimensionError("rows() needs a rank-1 or rank-2 tensor, got " + shape_string());
}

std::size_t Tensor::cols_other_rank() const {
  if (shape_.size() == 1) return shape_[0];
  throw DimensionError("cols() needs a rank-1 or rank-2 tensor, got " + shape_string());
}

MatrixMap Tensor::as_matrix() {
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

ConstMatrixMap Tensor::as_matrix() const {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
}

Tensor Tensor::row_at(std::size_t r) const {
  const std::size_t c = cols();
  if (r >= rows()) throw DimensionError("row index out of range");
  return Tensor({1, c}, std::span<const double>(data_).subspan(r * c, c));
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return Eigen::Map<const Eigen::ArrayXd>(data_.data(), static_cast<Eigen::Index>(data_.size())).allFinite();
}

double Tensor::max_abs() const noexcept {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::frobenius() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimensions differ: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor out = Tensor::zeros(a.rows(), b.cols());
  out.as_matrix().noalias() = a.as_matrix() * b.as_matrix();
  return out;
}

Tensor transpose(const Tensor& a) {
  Tensor out = Tensor::zeros(a.cols(), a.rows());
  out.as_matrix() = a.as_matrix().transpose();
  return out;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + " shape mismatch: " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    if (!std::isfinite(d)) return std::numeric_limits<double>::infinity();
    m = std::max(m, d);
  }
  return m;
}

Tensor vstack(const std::vector<Tensor>& parts) {
  if (parts.empty()) return {};
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("vstack column mismatch");
    r += p.rows();
  }
  Tensor out = Tensor::zeros(r, c);
  double* dst = out.data().data();
  for (const auto& p : parts) dst = std::copy(p.values().begin(), p.values().end(), dst);
  return out;
}

}  // namespace linearizer
