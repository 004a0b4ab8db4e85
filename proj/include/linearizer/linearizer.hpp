#pragma once

// f(x) = g_y^-1(A g_x(x)): a nonlinear map that is linear between the spaces
// induced by g_x and g_y. Derived operators (composition, powers, transpose,
// SVD, pseudoinverse) act on the core alone and reuse the same bijections.

#include <array>
#include <span>
#include <vector>

#include "linearizer/core.hpp"
#include "linearizer/induced.hpp"
#include "linearizer/invertible.hpp"

namespace linearizer {

class Linearizer {
 public:
  Linearizer(MapPtr gx, MapPtr gy, CorePtr core);
  // g_x == g_y == g.
  static Linearizer shared(MapPtr g, CorePtr core);
  // (g, g, I): the identity map on the space induced by g.
  static Linearizer identity(MapPtr g);

  const MapPtr& gx() const noexcept { return gx_; }
  const MapPtr& gy() const noexcept { return gy_; }
  const CorePtr& core() const noexcept { return core_; }
  bool shared_basis() const noexcept { return gx_ == gy_; }
  std::size_t in_dim() const { return gx_->dim(); }
  std::size_t out_dim() const { return gy_->dim(); }

  InducedSpace input_space() const { return InducedSpace(gx_); }
  InducedSpace output_space() const { return InducedSpace(gy_); }

  Var apply(const Var& x) const;
  Tensor apply(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const { return apply(x); }

 private:
  MapPtr gx_;
  MapPtr gy_;
  CorePtr core_;
};

// f2 o f1 with core A2 A1. f2.gx() and f1.gy() must be the same map object.
Linearizer compose(const Linearizer& f2, const Linearizer& f1);

// f^N = (g, g, A^N). Requires a shared basis and a square core; N >= 1.
Linearizer power(const Linearizer& f, unsigned n);

// f^T(y) = g_x^-1(A^T g_y(y)).
Linearizer transpose(const Linearizer& f);

struct LinearizerSvd {
  std::vector<double> sigmas;  // descending, min(m, n) entries
  Tensor u;                    // Euclidean left singular vectors as rows (k x m)
  Tensor v;                    // Euclidean right singular vectors as rows (k x n)
  Tensor u_tilde;              // g_y^-1(u_i) as rows
  Tensor v_tilde;              // g_x^-1(v_i) as rows
};

// Throws NumericError if the core's SVD yields non-finite factors.
LinearizerSvd svd(const Linearizer& f);

// Singular values below rcond * sigma_max are treated as zero.
inline constexpr double kPinvRcond = 1e-10;

Tensor pinv_matrix(const Tensor& a, double rcond = kPinvRcond);
// f^+(y) = g_x^-1(A^+ g_y(y)).
Linearizer pinv(const Linearizer& f, double rcond = kPinvRcond);

struct PenroseResiduals {
  // f f+ f = f, f+ f f+ = f+, (f f+)* = f f+, (f+ f)* = f+ f.
  std::array<double, 4> residuals{};

  double worst() const;
};

// Probes are drawn from the ball of `radius` in each induced space. The first
// two identities report data-side residuals (InducedSpace::residual); the
// self-adjointness identities report the relative adjoint error.
PenroseResiduals penrose_residuals(const Linearizer& f, const Linearizer& f_dag, std::size_t trials, RngStream& rng,
                                   double radius = 3.0);

// |f(a1 (.) x1 (+) a2 (.) x2) (-) (a1 (.) f(x1) (+) a2 (.) f(x2))|, max over rows.
// a1 and a2 hold one scalar per row.
double superposition_residual(const Linearizer& f, const Tensor& x1, const Tensor& x2, std::span<const double> a1,
                              std::span<const double> a2);

// |f(f(x)) (-) f(x)| on the data side, max over rows. Requires a shared basis and square core.
double idempotency_residual(const Linearizer& f, const Tensor& x);

// max over rows of |<f(x), y>_gy - <x, ft(y)>_gx| divided by the larger of the
// two Cauchy-Schwarz bounds |g_y f(x)| |g_y y| and |g_x x| |g_x ft(y)|.
double adjoint_relative_error(const Linearizer& f, const Linearizer& ft, const Tensor& x, const Tensor& y);

}  // namespace linearizer
