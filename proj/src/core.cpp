#include "linearizer/core.hpp"

#include <cmath>

#include "linearizer/errors.hpp"

namespace linearizer {

std::string to_string(CoreKind kind) {
  switch (kind) {
    case CoreKind::Dense: return "Dense";
    case CoreKind::LowRank: return "LowRank";
    case CoreKind::Diagonal: return "Diagonal";
    case CoreKind::BinaryDiagonalSTE: return "BinaryDiagonalSTE";
    case CoreKind::Hyper: return "Hyper";
  }
  return "Unknown";
}

Var LinearCore::apply(const Var& z) const {
  if (z.cols() != cols()) {
    throw DimensionError("core with " + std::to_string(cols()) + " columns applied to " + z.value().shape_string());
  }
  return ops::matmul(z, ops::transpose(matrix()));
}

Tensor materialize(const LinearCore& core) {
  NoGradGuard guard;
  return core.matrix().value();
}

namespace {

Var leaf(Tensor t, bool trainable) { return trainable ? parameter(std::move(t)) : constant(std::move(t)); }

}  // namespace

DenseCore::DenseCore(Tensor a, bool trainable) {
  if (a.rank() != 2) throw DimensionError("dense core needs a matrix");
  a_ = leaf(std::move(a), trainable);
}

void DenseCore::collect_parameters(ParameterList& out, const std::string& prefix) const {
  if (a_.requires_grad()) out.push_back({prefix + ".a", a_});
}

LowRankCore::LowRankCore(Tensor left, Tensor right, bool trainable) {
  if (left.cols() != right.rows()) throw DimensionError("low-rank factors do not chain");
  left_ = leaf(std::move(left), trainable);
  right_ = leaf(std::move(right), trainable);
}

Var LowRankCore::apply(const Var& z) const {
  if (z.cols() != cols()) throw DimensionError("low-rank core applied to " + z.value().shape_string());
  return ops::matmul(ops::matmul(z, ops::transpose(right_)), ops::transpose(left_));
}

void LowRankCore::collect_parameters(ParameterList& out, const std::string& prefix) const {
  if (left_.requires_grad()) out.push_back({prefix + ".left", left_});
  if (right_.requires_grad()) out.push_back({prefix + ".right", right_});
}

DiagonalCore::DiagonalCore(Tensor diagonal, bool trainable) {
  const std::size_t n = diagonal.size();
  d_ = leaf(Tensor({1, n}, diagonal.values()), trainable);
}

namespace {

// diag(d) from a 1 x n row, differentiable.
Var diag_matrix(const Var& d) {
  const std::size_t n = d.cols();
  return ops::mul(constant(Tensor::identity(n)), d);
}

}  // namespace

Var DiagonalCore::matrix() const { return diag_matrix(d_); }

void DiagonalCore::collect_parameters(ParameterList& out, const std::string& prefix) const {
  if (d_.requires_grad()) out.push_back({prefix + ".diagonal", d_});
}

BinaryDiagonalCore::BinaryDiagonalCore(Tensor logits) {
  const std::size_t n = logits.size();
  logits_ = parameter(Tensor({1, n}, logits.values()));
}

Var BinaryDiagonalCore::probabilities() const { return ops::sigmoid(logits_); }

Var BinaryDiagonalCore::diagonal(const std::optional<Tensor>& anchor) const {
  return ops::ste_round(probabilities(), anchor);
}

Var BinaryDiagonalCore::matrix() const { return diag_matrix(diagonal()); }

Tensor BinaryDiagonalCore::mask() const {
  NoGradGuard guard;
  return diagonal().value();
}

void BinaryDiagonalCore::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".logits", logits_});
}

Tensor scalar_features(double s, std::size_t count) {
  if (count < 2 || count % 2 != 0) throw ContractError("scalar feature count must be even and >= 2");
  const std::size_t half = count / 2;
  Tensor f = Tensor::zeros(1, count);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = half == 1 ? 1.0 : std::pow(100.0, static_cast<double>(k) / static_cast<double>(half - 1));
    f(0, k) = std::sin(freq * s);
    f(0, half + k) = std::cos(freq * s);
  }
  return f;
}

namespace {

class BoundHyperCore final : public LinearCore {
 public:
  BoundHyperCore(std::shared_ptr<const HyperCore> hyper, double s) : hyper_(std::move(hyper)), s_(s) {}

  CoreKind kind() const override { return CoreKind::Hyper; }
  std::size_t rows() const override { return hyper_->rows(); }
  std::size_t cols() const override { return hyper_->cols(); }
  Var matrix() const override { return hyper_->matrix_at(s_); }
  Var apply(const Var& z) const override {
    auto [left, right] = hyper_->factors(s_);
    return ops::matmul(ops::matmul(z, ops::transpose(right)), ops::transpose(left));
  }

 private:
  std::shared_ptr<const HyperCore> hyper_;
  double s_;
};

}  // namespace

HyperCore::HyperCore(std::size_t rows, std::size_t cols, std::size_t rank, const HyperOptions& options,
                     RngStream& rng)
    : rows_(rows),
      cols_(cols),
      rank_(rank),
      features_(options.features),
      left_net_({options.features, options.width, options.width, rows * rank}, rng, options.output_gain),
      right_net_({options.features, options.width, options.width, rank * cols}, rng, options.output_gain) {
  if (rank == 0) throw ContractError("hyper core rank must be positive");
}

std::pair<Var, Var> HyperCore::factors(double s) const {
  const Var e = constant(scalar_features(s, features_));
  Var left = ops::reshape(left_net_(e), rows_, rank_);
  Var right = ops::reshape(right_net_(e), rank_, cols_);
  return {left, right};
}

Var HyperCore::matrix_at(double s) const {
  auto [left, right] = factors(s);
  return ops::matmul(left, right);
}

Tensor HyperCore::materialize_at(double s) const {
  NoGradGuard guard;
  return matrix_at(s).value();
}

Var HyperCore::apply_batch(const Var& z, std::span<const double> s) const {
  if (z.cols() != cols_ || s.size() != z.rows()) {
    throw DimensionError("hyper core batch: vectors " + z.value().shape_string() + " with " +
                         std::to_string(s.size()) + " scalars");
  }
  std::vector<Tensor> rows;
  rows.reserve(s.size());
  for (double v : s) rows.push_back(scalar_features(v, features_));
  const Var e = constant(vstack(rows));
  Var left = left_net_(e);
  Var right = right_net_(e);
  return ops::rowwise_matvec(left, ops::rowwise_matvec(right, z, rank_), rows_);
}

CorePtr bind_hyper(std::shared_ptr<const HyperCore> hyper, double s) {
  if (!hyper) throw ContractError("bind_hyper of a null core");
  return std::make_shared<BoundHyperCore>(std::move(hyper), s);
}

void HyperCore::collect_parameters(ParameterList& out, const std::string& prefix) const {
  left_net_.collect_parameters(out, prefix + ".left");
  right_net_.collect_parameters(out, prefix + ".right");
}

CorePtr interpolate_cores(const LinearCore& a, const LinearCore& b, double alpha) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("interpolate_cores: dimension mismatch");
  if (!std::isfinite(alpha)) throw NumericError("interpolate_cores: non-finite alpha");
  const Tensor ma = materialize(a);
  const Tensor mb = materialize(b);
  if (alpha == 1.0) return std::make_shared<DenseCore>(ma);
  if (alpha == 0.0) return std::make_shared<DenseCore>(mb);
  return std::make_shared<DenseCore>(alpha * ma + (1.0 - alpha) * mb);
}

}  // namespace linearizer
