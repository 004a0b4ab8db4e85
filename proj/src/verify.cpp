#include "linearizer/verify.hpp"

#include <algorithm>
#include <cmath>

#include "linearizer/flow.hpp"
#include "linearizer/ign.hpp"
#include "linearizer/linearizer.hpp"

namespace linearizer {

namespace {

MapPtr stack(std::size_t n, RngStream rng) {
  StackOptions o;
  o.dim = n;
  return make_coupling_stack(o, rng);
}

std::vector<double> scalars(RngStream& rng, std::size_t count) {
  std::vector<double> a(count);
  for (double& v : a) v = rng.uniform(-2.0, 2.0);
  return a;
}

}  // namespace

std::vector<CheckResult> verify_suite(std::uint64_t seed, const std::function<void(const CheckResult&)>& on_check) {
  std::vector<CheckResult> out;
  auto check = [&](std::string name, double value, double tol) {
    CheckResult r{std::move(name), value, tol, std::isfinite(value) && value < tol};
    if (on_check) on_check(r);
    out.push_back(std::move(r));
  };
  const RngStream root(seed);
  std::uint64_t stream = 0;
  auto next = [&] { return root.substream(stream++); };

  {
    RngStream rng = next();
    const auto id = axiom_suite(InducedSpace(identity_map(3)), rng);
    check("axioms.identity", id.worst(), 1e-6);
    const auto cube = axiom_suite(InducedSpace(AnalyticBijection::cube(3)), rng);
    check("axioms.cube", cube.worst(), 1e-6);
    const auto coupling = axiom_suite(InducedSpace(stack(3, next())), rng);
    check("axioms.coupling", coupling.worst(), 1e-6);
  }

  {
    const std::size_t n = 4;
    const MapPtr gx = stack(n, next());
    const MapPtr gy = stack(n, next());
    RngStream rng = next();
    auto hyper = std::make_shared<HyperCore>(n, n, 2, HyperOptions{.output_gain = 1.0}, rng);
    const std::vector<std::pair<std::string, CorePtr>> cores{
        {"dense", std::make_shared<DenseCore>(rng.normal_tensor(n, n))},
        {"low-rank", std::make_shared<LowRankCore>(rng.normal_tensor(n, 2), rng.normal_tensor(2, n))},
        {"diagonal", std::make_shared<DiagonalCore>(rng.normal_tensor(1, n))},
        {"binary-diagonal", std::make_shared<BinaryDiagonalCore>(rng.normal_tensor(1, n, 2.0))},
        {"hyper", bind_hyper(hyper, 0.3)},
    };
    for (const auto& [name, core] : cores) {
      const Linearizer f(gx, gy, core);
      const Tensor x1 = sample_ball(rng, 1000, n, 3.0);
      const Tensor x2 = sample_ball(rng, 1000, n, 3.0);
      check("superposition." + name, superposition_residual(f, x1, x2, scalars(rng, 1000), scalars(rng, 1000)), 1e-6);
    }
  }

  {
    const std::size_t n = 3;
    const MapPtr g1 = stack(n, next());
    const MapPtr g2 = stack(n, next());
    const MapPtr g3 = stack(n, next());
    RngStream rng = next();
    const Linearizer f1(g1, g2, std::make_shared<DenseCore>(rng.normal_tensor(n, n)));
    const Linearizer f2(g2, g3, std::make_shared<DenseCore>(rng.normal_tensor(n, n)));
    const Tensor x = sample_ball(rng, 100, n, 3.0);
    check("composition", max_row_distance(compose(f2, f1)(x), f2(f1(x))), 1e-8);

    const Linearizer sq = Linearizer::shared(g1, std::make_shared<DenseCore>(0.5 * rng.normal_tensor(n, n)));
    Tensor y = x;
    for (int i = 0; i < 5; ++i) y = sq(y);
    check("power.5", max_row_distance(power(sq, 5)(x), y), 1e-6);

    const Tensor xs = sample_ball(rng, 1000, n, 3.0);
    const Tensor ys = sample_ball(rng, 1000, n, 3.0);
    check("transpose.adjoint", adjoint_relative_error(f1, transpose(f1), xs, ys), 1e-8);
  }

  {
    RngStream rng = next();
    const Linearizer f(stack(4, next()), stack(3, next()), std::make_shared<DenseCore>(rng.normal_tensor(3, 4)));
    const auto s = svd(f);
    const InducedSpace xs = f.input_space();
    const InducedSpace ys = f.output_space();
    double transport = 0.0;
    for (std::size_t i = 0; i < s.sigmas.size(); ++i) {
      if (s.sigmas[i] <= 0.0) continue;
      transport = std::max(transport, ys.residual(f(s.v_tilde.row_at(i)), ys.odot(s.sigmas[i], s.u_tilde.row_at(i))));
    }
    check("svd.transport", transport, 1e-6);
    double gram = 0.0;
    for (std::size_t i = 0; i < s.sigmas.size(); ++i) {
      for (std::size_t j = 0; j < s.sigmas.size(); ++j) {
        const double target = i == j ? 1.0 : 0.0;
        gram = std::max(gram, std::abs(xs.inner(s.v_tilde.row_at(i), s.v_tilde.row_at(j))[0] - target));
        gram = std::max(gram, std::abs(ys.inner(s.u_tilde.row_at(i), s.u_tilde.row_at(j))[0] - target));
      }
    }
    check("svd.gram", gram, 1e-8);
  }

  {
    RngStream rng = next();
    const Tensor a = matmul(rng.normal_tensor(4, 2), rng.normal_tensor(2, 4));
    const Linearizer f(stack(4, next()), stack(4, next()), std::make_shared<DenseCore>(a));
    RngStream probes = next();
    const auto p = penrose_residuals(f, pinv(f), 1000, probes);
    for (std::size_t i = 0; i < 4; ++i) check("penrose." + std::to_string(i + 1), p.residuals[i], 1e-6);
  }

  {
    RngStream rng = next();
    FlowOptions o;
    o.hyper.output_gain = 1.0;
    const FlowModel m = FlowModel::create(o, rng);
    const Tensor x0 = next().normal_tensor(200, 2);
    for (std::size_t n : {1u, 10u, 100u, 1000u}) {
      const Tensor b = collapse(m, n, Scheme::Euler).b;
      check("collapse.euler." + std::to_string(n),
            relative_difference(one_step_sample(m, b, x0), euler_sample(m, x0, n)), 1e-6);
    }
    const Tensor b = collapse(m, 100, Scheme::Rk4).b;
    check("collapse.rk4.100", relative_difference(one_step_sample(m, b, x0), rk4_sample(m, x0, 100)), 1e-8);
  }

  {
    RngStream rng = next();
    const IGNModel m = IGNModel::create({}, rng);
    const Tensor probes = next().normal_tensor(1000, m.dim(), 3.0);
    check("ign.idempotency", idempotency_residual(m.linearizer(), probes), 1e-6);
  }
  return out;
}

}  // namespace linearizer
