#include "linearizer/induced.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "linearizer/errors.hpp"

namespace linearizer {

namespace {

void require_same(const Tensor& u, const Tensor& v, const char* op) {
  if (u.rows() != v.rows() || u.cols() != v.cols()) {
    throw DimensionError(std::string(op) + ": shapes " + u.shape_string() + " and " + v.shape_string());
  }
}

}  // namespace

InducedSpace::InducedSpace(MapPtr g) : g_(std::move(g)) {
  if (!g_) throw ContractError("InducedSpace needs a map");
}

Tensor InducedSpace::zero_vector() const { return inverse(*g_, Tensor::zeros(1, dim())); }

Tensor InducedSpace::oplus(const Tensor& u, const Tensor& v) const {
  require_same(u, v, "oplus");
  return inverse(*g_, forward(*g_, u) + forward(*g_, v));
}

Tensor InducedSpace::odot(double a, const Tensor& v) const {
  if (!std::isfinite(a)) throw NumericError("odot: non-finite scalar");
  return inverse(*g_, a * forward(*g_, v));
}

Tensor InducedSpace::odot(std::span<const double> a, const Tensor& v) const {
  if (a.size() != v.rows()) throw DimensionError("odot: one scalar per row required");
  Tensor z = forward(*g_, v);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (!std::isfinite(a[r])) throw NumericError("odot: non-finite scalar");
    for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) *= a[r];
  }
  return inverse(*g_, z);
}

Tensor InducedSpace::ominus(const Tensor& u, const Tensor& v) const {
  require_same(u, v, "ominus");
  return inverse(*g_, forward(*g_, u) - forward(*g_, v));
}

std::vector<double> InducedSpace::inner(const Tensor& u, const Tensor& v) const {
  require_same(u, v, "inner");
  return row_dot(forward(*g_, u), forward(*g_, v));
}

std::vector<double> InducedSpace::norm(const Tensor& v) const {
  std::vector<double> out = inner(v, v);
  for (double& x : out) x = std::sqrt(x);
  return out;
}

double InducedSpace::residual(const Tensor& u, const Tensor& v) const {
  const Tensor diff = ominus(u, v);
  const Tensor zero = zero_vector();
  double worst = 0.0;
  for (std::size_t r = 0; r < diff.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < diff.cols(); ++c) {
      const double d = diff(r, c) - zero(0, c);
      s += d * d;
    }
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

std::vector<double> row_dot(const Tensor& a, const Tensor& b) {
  require_same(a, b, "row_dot");
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c) * b(r, c);
    out[r] = s;
  }
  return out;
}

double max_row_distance(const Tensor& a, const Tensor& b) {
  require_same(a, b, "max_row_distance");
  double worst = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      const double d = a(r, c) - b(r, c);
      s += d * d;
    }
    if (!std::isfinite(s)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, std::sqrt(s));
  }
  return worst;
}

Tensor sample_ball(RngStream& rng, std::size_t count, std::size_t n, double radius) {
  Tensor x = rng.normal_tensor(count, n);
  for (std::size_t r = 0; r < count; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x(r, c) * x(r, c);
    s = std::sqrt(s);
    if (s > radius) {
      for (std::size_t c = 0; c < n; ++c) x(r, c) *= radius / s;
    }
  }
  return x;
}

bool AxiomReport::passed() const {
  return std::all_of(axioms.begin(), axioms.end(), [](const auto& a) { return a.passed; });
}

double AxiomReport::worst() const {
  double w = 0.0;
  for (const auto& a : axioms) w = std::max(w, std::isnan(a.residual) ? std::numeric_limits<double>::infinity() : a.residual);
  return w;
}

namespace {

double guarded(const std::function<double()>& fn) {
  try {
    const double v = fn();
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const NumericError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

AxiomReport axiom_suite(const InducedSpace& space, RngStream& rng, const AxiomOptions& options) {
  if (options.trials == 0) throw ContractError("axiom_suite needs at least one trial");
  const std::size_t n = space.dim();
  const std::size_t t = options.trials;
  const Tensor u = sample_ball(rng, t, n, options.radius);
  const Tensor v = sample_ball(rng, t, n, options.radius);
  const Tensor w = sample_ball(rng, t, n, options.radius);
  std::vector<double> a(t), b(t), ab(t), a_plus_b(t), minus_one(t, -1.0);
  for (std::size_t i = 0; i < t; ++i) {
    a[i] = rng.uniform(-options.scalar_range, options.scalar_range);
    b[i] = rng.uniform(-options.scalar_range, options.scalar_range);
    ab[i] = a[i] * b[i];
    a_plus_b[i] = a[i] + b[i];
  }
  const MapPtr& g = space.map();
  auto zeros = [&] {
    const Tensor z = space.zero_vector();
    return vstack(std::vector<Tensor>(t, z));
  };

  AxiomReport report;
  report.tolerance = options.tolerance;
  report.trials = t;
  const std::array<std::pair<const char*, std::function<double()>>, 9> checks{{
      {"closure",
       [&] {
         const Tensor s = space.oplus(u, v);
         const Tensor m = space.odot(a, u);
         return std::max(max_row_distance(s, inverse(*g, forward(*g, s))),
                         max_row_distance(m, inverse(*g, forward(*g, m))));
       }},
      {"associativity",
       [&] { return max_row_distance(space.oplus(space.oplus(u, v), w), space.oplus(u, space.oplus(v, w))); }},
      {"commutativity", [&] { return max_row_distance(space.oplus(u, v), space.oplus(v, u)); }},
      {"additive_identity", [&] { return max_row_distance(space.oplus(u, zeros()), u); }},
      {"additive_inverse", [&] { return max_row_distance(space.oplus(u, space.odot(minus_one, u)), zeros()); }},
      {"scalar_compatibility", [&] { return max_row_distance(space.odot(a, space.odot(b, u)), space.odot(ab, u)); }},
      {"scalar_identity", [&] { return max_row_distance(space.odot(1.0, u), u); }},
      {"distributivity_vectors",
       [&] { return max_row_distance(space.odot(a, space.oplus(u, v)), space.oplus(space.odot(a, u), space.odot(a, v))); }},
      {"distributivity_scalars",
       [&] { return max_row_distance(space.odot(a_plus_b, u), space.oplus(space.odot(a, u), space.odot(b, u))); }},
  }};
  for (std::size_t i = 0; i < checks.size(); ++i) {
    auto& out = report.axioms[i];
    out.name = checks[i].first;
    out.residual = guarded(checks[i].second);
    out.passed = out.residual < options.tolerance;
  }
  return report;
}

}  // namespace linearizer
