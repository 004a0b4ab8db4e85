#include <doctest.h>

#include <cmath>

#include "linearizer/errors.hpp"
#include "linearizer/induced.hpp"

using namespace linearizer;

namespace {

MapPtr coupling_stack(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed);
  StackOptions o;
  o.dim = n;
  return make_coupling_stack(o, rng);
}

}  // namespace

TEST_SUITE("induced-algebra") {
  TEST_CASE("oplus on the cube space") {
    const InducedSpace s(AnalyticBijection::cube(1));
    const Tensor r = s.oplus(Tensor::row({1.0}), Tensor::row({1.0}));
    CHECK(r[0] == doctest::Approx(1.259921).epsilon(1e-6));
    CHECK(r[0] == doctest::Approx(std::cbrt(2.0)).epsilon(1e-15));
  }

  TEST_CASE("identity and commutativity of oplus") {
    const InducedSpace s(coupling_stack(3, 1));
    RngStream rng(2);
    const Tensor u = sample_ball(rng, 500, 3, 3.0);
    const Tensor v = sample_ball(rng, 500, 3, 3.0);
    const Tensor zero = vstack(std::vector<Tensor>(500, s.zero_vector()));
    CHECK(max_abs_diff(s.oplus(u, zero), u) < 1e-9);
    CHECK(max_abs_diff(s.oplus(u, v), s.oplus(v, u)) < 1e-9);
  }

  TEST_CASE("odot") {
    const InducedSpace s(coupling_stack(2, 3));
    const Tensor v = RngStream(4).normal_tensor(10, 2);
    CHECK(max_abs_diff(s.odot(1.0, v), v) < 1e-12);
    const Tensor zero = vstack(std::vector<Tensor>(10, s.zero_vector()));
    CHECK(max_abs_diff(s.odot(0.0, v), zero) < 1e-12);
    const InducedSpace cube(AnalyticBijection::cube(1));
    CHECK(cube.odot(8.0, Tensor::row({1.0}))[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(s.odot(std::nan(""), v), NumericError);
    CHECK_THROWS_AS(s.odot(INFINITY, v), NumericError);
  }

  TEST_CASE("ominus") {
    const InducedSpace s(coupling_stack(3, 5));
    RngStream rng(6);
    const Tensor u = sample_ball(rng, 200, 3, 3.0);
    const Tensor v = sample_ball(rng, 200, 3, 3.0);
    const Tensor zero = vstack(std::vector<Tensor>(200, s.zero_vector()));
    CHECK(max_abs_diff(s.ominus(u, u), zero) < 1e-12);
    CHECK(max_abs_diff(s.ominus(s.oplus(u, v), v), u) < 1e-9);
    const InducedSpace cube(AnalyticBijection::cube(1));
    CHECK(cube.ominus(Tensor::row({2.0}), Tensor::row({1.0}))[0] == doctest::Approx(1.912931).epsilon(1e-6));
    CHECK_THROWS_AS(s.ominus(u, Tensor::zeros(200, 2)), DimensionError);
  }

  TEST_CASE("inner product") {
    const InducedSpace s(coupling_stack(4, 7));
    RngStream rng(8);
    const Tensor u = sample_ball(rng, 1000, 4, 3.0);
    const Tensor v = sample_ball(rng, 1000, 4, 3.0);
    const auto uv = s.inner(u, v);
    const auto uu = s.inner(u, u);
    const auto vv = s.inner(v, v);
    for (std::size_t i = 0; i < uv.size(); ++i) {
      CHECK(uu[i] >= 0.0);
      CHECK(uv[i] * uv[i] <= uu[i] * vv[i] * (1 + 1e-12));
    }
    // Positive definiteness: the zero vector has induced norm zero.
    CHECK(s.norm(s.zero_vector())[0] < 1e-12);

    const InducedSpace euclid(identity_map(4));
    CHECK(euclid.inner(u, v) == row_dot(u, v));
  }

  TEST_CASE("g is an isometry onto Euclidean space") {
    const MapPtr g = coupling_stack(3, 9);
    const InducedSpace s(g);
    RngStream rng(10);
    const Tensor u = sample_ball(rng, 100, 3, 3.0);
    const Tensor v = sample_ball(rng, 100, 3, 3.0);
    // Same g evaluations and same summation order, so bit-level equality.
    CHECK(s.inner(u, v) == row_dot(forward(*g, u), forward(*g, v)));
  }

  TEST_CASE("axiom suite: identity map is Euclidean") {
    RngStream rng(11);
    const auto report = axiom_suite(InducedSpace(identity_map(3)), rng, {.trials = 1000, .tolerance = 1e-12});
    CHECK(report.passed());
    for (const auto& a : report.axioms) CHECK(a.residual < 1e-14);
  }

  TEST_CASE("axiom suite: cube") {
    RngStream rng(12);
    const auto report = axiom_suite(InducedSpace(AnalyticBijection::cube(3)), rng, {.trials = 1000, .tolerance = 1e-7});
    for (const auto& a : report.axioms) {
      INFO(a.name);
      CHECK(a.residual < 1e-7);
    }
  }

  TEST_CASE("axiom suite: six-block coupling stack") {
    for (std::size_t n : {2u, 5u}) {
      RngStream rng(13);
      const auto report = axiom_suite(InducedSpace(coupling_stack(n, 14)), rng, {.trials = 1000, .tolerance = 1e-6});
      for (const auto& a : report.axioms) {
        INFO(a.name << " n=" << n);
        CHECK(a.residual < 1e-6);
      }
    }
  }

  TEST_CASE("axiom suite reports non-finite residuals as failures") {
    // sinh overflows for large induced scalings.
    RngStream rng(15);
    const auto report = axiom_suite(InducedSpace(AnalyticBijection::scaled_sinh(2, 1e308)), rng,
                                    {.trials = 10, .tolerance = 1e-6, .radius = 3.0});
    CHECK_FALSE(report.passed());
    CHECK(std::isinf(report.worst()));
  }

  TEST_CASE("axiom suite needs trials") {
    RngStream rng(16);
    CHECK_THROWS_AS(axiom_suite(InducedSpace(identity_map(2)), rng, {.trials = 0}), ContractError);
  }
}
