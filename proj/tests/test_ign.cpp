#include <doctest.h>

#include <cmath>

#include "linearizer/datasets.hpp"
#include "linearizer/errors.hpp"
#include "linearizer/gradcheck.hpp"
#include "linearizer/ign.hpp"

using namespace linearizer;

namespace {

IGNOptions small_ign(std::size_t dim = 6) {
  IGNOptions o;
  o.dim = dim;
  o.blocks = 2;
  o.conditioner.width = 16;
  o.conditioner.output_gain = 0.5;
  return o;
}

IGNModel random_ign(std::uint64_t seed, IGNOptions options = IGNOptions{}) {
  RngStream rng(seed);
  return IGNModel::create(options, rng);
}

IGNModel with_logits(MapPtr g, Tensor logits) {
  return IGNModel(std::move(g), std::make_shared<BinaryDiagonalCore>(std::move(logits)));
}

double sigmoid_slope(double l) {
  const double p = 1.0 / (1.0 + std::exp(-l));
  return p * (1.0 - p);
}

}  // namespace

TEST_SUITE("ign") {
  TEST_CASE("straight-through binarization") {
    const IGNModel m = with_logits(identity_map(3), Tensor::row({std::log(9.0), -std::log(9.0), 0.0}));
    const Tensor p = ign_probabilities(m);
    CHECK(p[0] == doctest::Approx(0.9));
    CHECK(p[1] == doctest::Approx(0.1));
    // The tie rounds down.
    CHECK(m.core()->mask() == Tensor::row({1.0, 0.0, 0.0}));

    const Var d = m.core()->diagonal();
    backward(ops::sum(d));
    const Tensor& grad = m.core()->logits().grad();
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(grad[i] == doctest::Approx(sigmoid_slope(m.core()->logits().value()[i])).epsilon(1e-14));
    }
  }

  TEST_CASE("sparsity gradient through the anchored surrogate") {
    const IGNModel m = with_logits(identity_map(4), Tensor::row({1.3, -0.2, 2.0, -1.7}));
    const double w = m.weights().sparse;
    const Tensor anchor = ign_probabilities(m);
    ParameterList params;
    m.core()->collect_parameters(params, "core");
    const auto report = grad_check(
        [&] { return ops::scale(ops::mean(m.core()->diagonal(anchor)), w); }, params);
    CHECK(report.passed());
    // Analytic: w / n * sigmoid'(l).
    zero_grad(params);
    backward(ops::scale(ops::mean(m.core()->diagonal()), w));
    const Tensor& logits = m.core()->logits().value();
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(m.core()->logits().grad()[i] == doctest::Approx(w / 4.0 * sigmoid_slope(logits[i])).epsilon(1e-14));
    }
  }

  TEST_CASE("loss components with identity map and full core") {
    const IGNModel m = with_logits(identity_map(4), Tensor::filled(1, 4, 5.0));
    const Tensor x = RngStream(1).normal_tensor(32, 4);
    const IGNLoss l = ign_loss(m, x);
    CHECK(l.rec.item() == 0.0);
    CHECK(l.sparse.item() == 1.0);
    CHECK(l.iso.item() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(l.total.item() == doctest::Approx(0.75));
    CHECK(m.rank() == 4);
  }

  TEST_CASE("empty core sends everything to g^-1(0)") {
    const IGNModel ref = random_ign(2, small_ign(4));
    const IGNModel m = with_logits(ref.g(), Tensor::filled(1, 4, -5.0));
    const Tensor x = RngStream(3).normal_tensor(40, 4);
    const IGNLoss l = ign_loss(m, x);
    CHECK(l.sparse.item() == 0.0);
    CHECK(m.rank() == 0);
    const Tensor origin = inverse(*m.g(), Tensor::zeros(1, 4));
    double expected = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t c = 0; c < 4; ++c) expected += std::pow(origin(0, c) - x(r, c), 2);
    }
    expected /= static_cast<double>(x.rows());
    CHECK(l.rec.item() == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("sparsity is monotone in the active count") {
    double previous = -1.0;
    for (int active = 0; active <= 5; ++active) {
      Tensor logits = Tensor::filled(1, 5, -3.0);
      for (int i = 0; i < active; ++i) logits[static_cast<std::size_t>(i)] = 3.0;
      const IGNModel m = with_logits(identity_map(5), logits);
      const double s = ign_loss(m, Tensor::zeros(2, 5)).sparse.item();
      CHECK(s == doctest::Approx(active / 5.0));
      CHECK(s > previous);
      CHECK(m.rank() == static_cast<std::size_t>(active));
      previous = s;
    }
  }

  TEST_CASE("ign_loss gradients match finite differences") {
    const Tensor data = embed(make_dataset("two-moons", 64, 4), 6);
    for (std::uint64_t seed : {5u, 6u, 7u}) {
      const IGNModel m = random_ign(seed, small_ign());
      RngStream rng(seed + 100);
      std::vector<Tensor> rows;
      for (int i = 0; i < 8; ++i) rows.push_back(data.row_at(rng.below(data.rows())));
      const Tensor x = vstack(rows);
      const IGNLoss l = ign_loss(m, x);
      CHECK(l.total.value().all_finite());
      const Tensor anchor = ign_probabilities(m);
      const auto report = grad_check([&] { return ign_loss(m, x, anchor).total; }, m.parameters());
      INFO("seed " << seed << " worst " << report.worst());
      CHECK(report.passed());
    }
  }

  TEST_CASE("projection is idempotent far from the data") {
    const IGNModel m = random_ign(8, small_ign(16));
    const Tensor probes = RngStream(9).normal_tensor(1000, 16, 3.0);
    CHECK(idempotency_residual(m.linearizer(), probes) < 1e-6);

    // A mixed mask still gives a projector.
    const IGNModel half = with_logits(m.g(), Tensor::row({2, -2, 2, -2, 2, -2, 2, -2, 2, -2, 2, -2, 2, -2, 2, -2}));
    CHECK(half.rank() == 8);
    const Tensor p = half.project(probes);
    CHECK(max_abs_diff(half.project(p), p) < 1e-6);
    CHECK(idempotency_residual(half.linearizer(), probes) < 1e-6);

    // Full mask: identity up to roundtrip error.
    const IGNModel full = with_logits(m.g(), Tensor::filled(1, 16, 3.0));
    CHECK(max_abs_diff(full.project(probes), probes) < 1e-9);
  }

  TEST_CASE("training logs the origin drift and keeps idempotency") {
    const Tensor data = embed(make_dataset("two-moons", 256, 10), 6);
    IGNTrainOptions o;
    o.steps = 40;
    o.batch = 16;
    o.log_every = 10;
    o.probes = 200;
    o.lr = 1e-2;
    auto run = [&] {
      IGNModel m = random_ign(11, small_ign());
      const auto log = train_ign(m, data, o);
      return std::make_pair(m.checksum(), log);
    };
    const auto [c1, log] = run();
    const auto [c2, log2] = run();
    CHECK(c1 == c2);
    REQUIRE(log.size() == 5);
    CHECK(log[0].step == 0);
    CHECK(log[4].step == 40);
    for (const auto& m : log) {
      CHECK(m.idempotency < 1e-6);
      CHECK(m.g0_norm >= 0.0);
      CHECK(std::isfinite(m.loss));
      CHECK(m.rank <= 6);
      CHECK(m.loss == log2[&m - log.data()].loss);
    }
  }

  TEST_CASE("shape and input errors") {
    IGNModel m = random_ign(12, small_ign(4));
    CHECK_THROWS_AS(ign_loss(m, Tensor::zeros(0, 4)), ContractError);
    CHECK_THROWS_AS(ign_loss(m, Tensor::zeros(3, 5)), DimensionError);
    CHECK_THROWS_AS(train_ign(m, Tensor::zeros(3, 5), {}), DimensionError);
    CHECK_THROWS_AS(IGNModel(m.g(), std::make_shared<BinaryDiagonalCore>(Tensor::zeros(1, 3))), DimensionError);
  }
}
