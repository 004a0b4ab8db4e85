#pragma once

// The matrix A sandwiched between the bijections of a Linearizer, in several
// parameterizations. Each core maps a batch z (B x cols) to z A^T (B x rows).

#include <memory>
#include <optional>
#include <string>

#include "linearizer/autodiff.hpp"
#include "linearizer/nn.hpp"
#include "linearizer/rng.hpp"

namespace linearizer {

enum class CoreKind { Dense, LowRank, Diagonal, BinaryDiagonalSTE, Hyper };

std::string to_string(CoreKind kind);

class LinearCore {
 public:
  virtual ~LinearCore() = default;

  virtual CoreKind kind() const = 0;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  // Differentiable rows x cols matrix.
  virtual Var matrix() const = 0;
  // Row-wise A z for a batch; the default multiplies by matrix()^T.
  virtual Var apply(const Var& z) const;
  virtual void collect_parameters(ParameterList& /*out*/, const std::string& /*prefix*/) const {}
};

using CorePtr = std::shared_ptr<const LinearCore>;

// Dense rows x cols matrix, gradient-free.
Tensor materialize(const LinearCore& core);

class DenseCore final : public LinearCore {
 public:
  explicit DenseCore(Tensor a, bool trainable = false);

  CoreKind kind() const override { return CoreKind::Dense; }
  std::size_t rows() const override { return a_.rows(); }
  std::size_t cols() const override { return a_.cols(); }
  Var matrix() const override { return a_; }
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  Var a_;
};

// A = left * right with left rows x r and right r x cols.
class LowRankCore final : public LinearCore {
 public:
  LowRankCore(Tensor left, Tensor right, bool trainable = false);

  CoreKind kind() const override { return CoreKind::LowRank; }
  std::size_t rows() const override { return left_.rows(); }
  std::size_t cols() const override { return right_.cols(); }
  std::size_t rank_bound() const { return left_.cols(); }
  Var matrix() const override { return ops::matmul(left_, right_); }
  Var apply(const Var& z) const override;
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  Var left_;
  Var right_;
};

class DiagonalCore final : public LinearCore {
 public:
  explicit DiagonalCore(Tensor diagonal, bool trainable = false);

  CoreKind kind() const override { return CoreKind::Diagonal; }
  std::size_t rows() const override { return d_.cols(); }
  std::size_t cols() const override { return d_.cols(); }
  Var matrix() const override;
  Var apply(const Var& z) const override { return z * d_; }
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  Var d_;  // 1 x n
};

// Diagonal with entries round(sigmoid(logits)) in {0, 1}, trained with a
// straight-through estimator. Ties at probability 0.5 round to 0.
class BinaryDiagonalCore final : public LinearCore {
 public:
  explicit BinaryDiagonalCore(Tensor logits);

  CoreKind kind() const override { return CoreKind::BinaryDiagonalSTE; }
  std::size_t rows() const override { return logits_.cols(); }
  std::size_t cols() const override { return logits_.cols(); }
  Var matrix() const override;
  Var apply(const Var& z) const override { return z * diagonal(); }
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

  // P = sigmoid(logits), 1 x n.
  Var probabilities() const;
  // Binarized diagonal (1 x n). With an anchor, forward value is
  // round(P) + (P - anchor); without one it is exactly round(P).
  Var diagonal(const std::optional<Tensor>& anchor = std::nullopt) const;
  // Current {0,1} mask as a plain tensor.
  Tensor mask() const;
  const Var& logits() const { return logits_; }

 private:
  Var logits_;
};

struct HyperOptions {
  std::size_t features = 32;
  std::size_t width = 64;
  // Init gain of the final layer; small values start A(s) near zero.
  double output_gain = 0.1;
};

// Sinusoidal embedding of a scalar: sin/cos pairs at geometric frequencies in [1, 100].
Tensor scalar_features(double s, std::size_t count);

// A(s) = left(s) right(s); each factor comes from its own 3-layer dense net of
// the embedded scalar s (time for flows, a style code for style operators).
class HyperCore {
 public:
  HyperCore(std::size_t rows, std::size_t cols, std::size_t rank, const HyperOptions& options, RngStream& rng);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t rank() const { return rank_; }
  std::size_t feature_count() const { return features_; }

  std::pair<Var, Var> factors(double s) const;
  Var matrix_at(double s) const;
  Tensor materialize_at(double s) const;
  // Row b of z is multiplied by A(s_b); `s` holds one scalar per row.
  Var apply_batch(const Var& z, std::span<const double> s) const;
  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::size_t rank_;
  std::size_t features_;
  Mlp left_net_;
  Mlp right_net_;
};

// A LinearCore view of A(s) for a fixed s; keeps `hyper` alive.
CorePtr bind_hyper(std::shared_ptr<const HyperCore> hyper, double s);

// Dense core alpha * A_a + (1 - alpha) * A_b.
CorePtr interpolate_cores(const LinearCore& a, const LinearCore& b, double alpha);

}  // namespace linearizer
