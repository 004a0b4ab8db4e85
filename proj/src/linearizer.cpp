#include "linearizer/linearizer.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "linearizer/errors.hpp"

namespace linearizer {

Linearizer::Linearizer(MapPtr gx, MapPtr gy, CorePtr core) : gx_(std::move(gx)), gy_(std::move(gy)), core_(std::move(core)) {
  if (!gx_ || !gy_ || !core_) throw ContractError("Linearizer needs two maps and a core");
  if (core_->cols() != gx_->dim() || core_->rows() != gy_->dim()) {
    throw DimensionError("core is " + std::to_string(core_->rows()) + "x" + std::to_string(core_->cols()) +
                         " but maps have dimensions " + std::to_string(gy_->dim()) + " and " +
                         std::to_string(gx_->dim()));
  }
}

Linearizer Linearizer::shared(MapPtr g, CorePtr core) {
  MapPtr gy = g;
  return Linearizer(std::move(g), std::move(gy), std::move(core));
}

Linearizer Linearizer::identity(MapPtr g) {
  const std::size_t n = g->dim();
  return shared(std::move(g), std::make_shared<DenseCore>(Tensor::identity(n)));
}

Var Linearizer::apply(const Var& x) const {
  if (x.cols() != in_dim()) {
    throw DimensionError("Linearizer with input dimension " + std::to_string(in_dim()) + " applied to " +
                         x.value().shape_string());
  }
  return gy_->inverse(core_->apply(gx_->forward(x)));
}

Tensor Linearizer::apply(const Tensor& x) const {
  NoGradGuard guard;
  return apply(constant(x)).value();
}

Linearizer compose(const Linearizer& f2, const Linearizer& f1) {
  if (f2.gx() != f1.gy()) {
    throw ContractError("compose: the outer Linearizer's input map is not the inner one's output map");
  }
  Tensor a = matmul(materialize(*f2.core()), materialize(*f1.core()));
  return Linearizer(f1.gx(), f2.gy(), std::make_shared<DenseCore>(std::move(a)));
}

Linearizer power(const Linearizer& f, unsigned n) {
  if (!f.shared_basis()) throw ContractError("power requires g_x and g_y to be the same map");
  if (f.core()->rows() != f.core()->cols()) throw ContractError("power requires a square core");
  if (n == 0) throw ContractError("power requires N >= 1");
  if (n == 1) return f;
  const Tensor a = materialize(*f.core());
  Tensor p = a;
  for (unsigned i = 1; i < n; ++i) p = matmul(p, a);
  return Linearizer::shared(f.gx(), std::make_shared<DenseCore>(std::move(p)));
}

Linearizer transpose(const Linearizer& f) {
  return Linearizer(f.gy(), f.gx(), std::make_shared<DenseCore>(transpose(materialize(*f.core()))));
}

LinearizerSvd svd(const Linearizer& f) {
  const Tensor a = materialize(*f.core());
  Eigen::JacobiSVD<RowMatrix> solver(a.as_matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = solver.singularValues();
  const std::size_t k = static_cast<std::size_t>(s.size());
  LinearizerSvd out;
  out.sigmas.assign(s.data(), s.data() + k);
  // Columns of U and V become rows so each singular vector is one batch entry.
  out.u = Tensor::from_eigen(solver.matrixU().leftCols(static_cast<Eigen::Index>(k)).transpose());
  out.v = Tensor::from_eigen(solver.matrixV().leftCols(static_cast<Eigen::Index>(k)).transpose());
  if (!out.u.all_finite() || !out.v.all_finite() ||
      !std::all_of(out.sigmas.begin(), out.sigmas.end(), [](double x) { return std::isfinite(x); })) {
    throw NumericError("SVD of the core produced non-finite factors");
  }
  out.u_tilde = inverse(*f.gy(), out.u);
  out.v_tilde = inverse(*f.gx(), out.v);
  return out;
}

Tensor pinv_matrix(const Tensor& a, double rcond) {
  Eigen::JacobiSVD<RowMatrix> solver(a.as_matrix(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = solver.singularValues();
  const double cutoff = s.size() > 0 ? rcond * s(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  RowMatrix p = solver.matrixV() * inv.asDiagonal() * solver.matrixU().transpose();
  Tensor out = Tensor::from_eigen(p);
  if (!out.all_finite()) throw NumericError("pseudoinverse produced non-finite entries");
  return out;
}

Linearizer pinv(const Linearizer& f, double rcond) {
  return Linearizer(f.gy(), f.gx(), std::make_shared<DenseCore>(pinv_matrix(materialize(*f.core()), rcond)));
}

double PenroseResiduals::worst() const {
  double w = 0.0;
  for (double r : residuals) w = std::max(w, std::isnan(r) ? std::numeric_limits<double>::infinity() : r);
  return w;
}

namespace {

using PointMap = std::function<Tensor(const Tensor&)>;

std::vector<double> row_norms(const Tensor& z) {
  std::vector<double> out = row_dot(z, z);
  for (double& v : out) v = std::sqrt(v);
  return out;
}

// Adjoint identity <p(x), y>_{gy} = <x, q(y)>_{gx}, relative to the Cauchy-Schwarz scale.
// Projectors have norm at most one, so for them |g(x)| |g(y)| is also a valid scale; it keeps
// the ratio meaningful when the projector is (nearly) zero.
double adjoint_error(const PointMap& p, const PointMap& q, const InvertibleMap& gx, const InvertibleMap& gy,
                     const Tensor& x, const Tensor& y, bool projector = false) {
  const Tensor gpx = forward(gy, p(x));
  const Tensor gyy = forward(gy, y);
  const Tensor gxx = forward(gx, x);
  const Tensor gqy = forward(gx, q(y));
  const auto lhs = row_dot(gpx, gyy);
  const auto rhs = row_dot(gxx, gqy);
  const auto n1 = row_norms(gpx), n2 = row_norms(gyy), n3 = row_norms(gxx), n4 = row_norms(gqy);
  double worst = 0.0;
  for (std::size_t r = 0; r < lhs.size(); ++r) {
    double scale = std::max({n1[r] * n2[r], n3[r] * n4[r], std::numeric_limits<double>::min()});
    if (projector) scale = std::max(scale, n2[r] * n3[r]);
    const double e = std::abs(lhs[r] - rhs[r]) / scale;
    if (!std::isfinite(e)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, e);
  }
  return worst;
}

}  // namespace

double adjoint_relative_error(const Linearizer& f, const Linearizer& ft, const Tensor& x, const Tensor& y) {
  if (ft.in_dim() != f.out_dim() || ft.out_dim() != f.in_dim()) throw DimensionError("adjoint: incompatible maps");
  return adjoint_error([&](const Tensor& v) { return f.apply(v); }, [&](const Tensor& v) { return ft.apply(v); },
                       *f.gx(), *f.gy(), x, y);
}

PenroseResiduals penrose_residuals(const Linearizer& f, const Linearizer& f_dag, std::size_t trials, RngStream& rng,
                                   double radius) {
  if (f_dag.in_dim() != f.out_dim() || f_dag.out_dim() != f.in_dim()) {
    throw DimensionError("penrose_residuals: pseudoinverse dimensions do not match");
  }
  const InducedSpace xs = f.input_space();
  const InducedSpace ys = f.output_space();
  const Tensor x = sample_ball(rng, trials, f.in_dim(), radius);
  const Tensor y = sample_ball(rng, trials, f.out_dim(), radius);
  const Tensor x2 = sample_ball(rng, trials, f.in_dim(), radius);
  const Tensor y2 = sample_ball(rng, trials, f.out_dim(), radius);

  auto ff = [&](const Tensor& v) { return f.apply(f_dag.apply(v)); };
  auto fdf = [&](const Tensor& v) { return f_dag.apply(f.apply(v)); };

  PenroseResiduals out;
  const Tensor fx = f.apply(x);
  out.residuals[0] = ys.residual(f.apply(f_dag.apply(fx)), fx);
  const Tensor fdy = f_dag.apply(y);
  out.residuals[1] = xs.residual(f_dag.apply(f.apply(fdy)), fdy);
  out.residuals[2] = adjoint_error(ff, ff, *f.gy(), *f.gy(), y, y2, true);
  out.residuals[3] = adjoint_error(fdf, fdf, *f.gx(), *f.gx(), x, x2, true);
  return out;
}

double superposition_residual(const Linearizer& f, const Tensor& x1, const Tensor& x2, std::span<const double> a1,
                              std::span<const double> a2) {
  const InducedSpace xs = f.input_space();
  const InducedSpace ys = f.output_space();
  const Tensor lhs = f.apply(xs.oplus(xs.odot(a1, x1), xs.odot(a2, x2)));
  const Tensor rhs = ys.oplus(ys.odot(a1, f.apply(x1)), ys.odot(a2, f.apply(x2)));
  return ys.residual(lhs, rhs);
}

double idempotency_residual(const Linearizer& f, const Tensor& x) {
  if (!f.shared_basis()) throw ContractError("idempotency requires g_x and g_y to be the same map");
  if (f.core()->rows() != f.core()->cols()) throw ContractError("idempotency requires a square core");
  const Tensor fx = f.apply(x);
  return f.output_space().residual(f.apply(fx), fx);
}

}  // namespace linearizer
