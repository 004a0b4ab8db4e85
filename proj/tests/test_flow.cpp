#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "linearizer/datasets.hpp"
#include "linearizer/errors.hpp"
#include "linearizer/flow.hpp"
#include "linearizer/gradcheck.hpp"

using namespace linearizer;

namespace {

FlowOptions small_options(double hyper_gain = 0.1) {
  FlowOptions o;
  o.blocks = 2;
  o.conditioner.width = 16;
  o.hyper.features = 8;
  o.hyper.width = 16;
  o.hyper.output_gain = hyper_gain;
  return o;
}

FlowModel random_model(std::uint64_t seed, FlowOptions options = FlowOptions{}) {
  RngStream rng(seed);
  return FlowModel::create(options, rng);
}

FlowModel fixed_model(MapPtr g, Tensor a) { return FlowModel(std::move(g), ScheduleField::constant(std::move(a))); }

Tensor scalar_matrix(double a) { return Tensor::matrix({{a}}); }

double mean_sq_diff(const Tensor& a, const Tensor& b) {
  const Tensor d = a - b;
  double s = 0.0;
  for (double v : d.data()) s += v * v;
  return s / static_cast<double>(a.rows());
}

// Degree-4 Taylor polynomial of exp(a), evaluated by direct summation.
Tensor taylor4(const Tensor& a) {
  Tensor term = Tensor::identity(a.rows());
  Tensor sum = term;
  for (int k = 1; k <= 4; ++k) {
    term = (1.0 / k) * matmul(term, a);
    sum = sum + term;
  }
  return sum;
}

}  // namespace

TEST_SUITE("flow-matching") {
  TEST_CASE("forward interpolation endpoints and midpoint") {
    const FlowModel m = random_model(1);
    RngStream rng(2);
    const Tensor x0 = rng.normal_tensor(64, 2);
    const Tensor x1 = rng.normal_tensor(64, 2);
    CHECK(max_abs_diff(forward_interpolate(m, x0, x1, 0.0), x0) < 1e-9);
    CHECK(max_abs_diff(forward_interpolate(m, x0, x1, 1.0), x1) < 1e-9);
    CHECK_THROWS_AS(forward_interpolate(m, x0, x1, 1.5), ContractError);
    CHECK_THROWS_AS(forward_interpolate(m, x0, x1, std::nan("")), ContractError);

    const FlowModel id = fixed_model(identity_map(2), Tensor::zeros(2, 2));
    CHECK(max_abs_diff(forward_interpolate(id, x0, x1, 0.5), 0.5 * (x0 + x1)) < 1e-15);
  }

  TEST_CASE("target velocity") {
    const FlowModel m = random_model(3);
    const Tensor x = RngStream(4).normal_tensor(16, 2);
    const Tensor zero = vstack(std::vector<Tensor>(16, m.space().zero_vector()));
    CHECK(max_abs_diff(target_velocity(m, x, x), zero) < 1e-12);

    const FlowModel id = fixed_model(identity_map(2), Tensor::zeros(2, 2));
    const Tensor y = RngStream(5).normal_tensor(16, 2);
    CHECK(max_abs_diff(target_velocity(id, x, y), y - x) < 1e-15);

    const FlowModel cube = fixed_model(AnalyticBijection::cube(1), scalar_matrix(0.0));
    const Tensor v = target_velocity(cube, Tensor::row({1.0}), Tensor::row({2.0}));
    CHECK(v[0] == doctest::Approx(std::cbrt(7.0)).epsilon(1e-14));
    CHECK_THROWS_AS(target_velocity(cube, Tensor::row({1.0}), Tensor::row({1.0, 2.0})), DimensionError);
  }

  TEST_CASE("prior draws are standard normal") {
    const Tensor data = Tensor::filled(10, 2, 3.0);
    RngStream rng(6);
    const FlowBatch b = draw_flow_batch(data, 20000, rng);
    const SampleStats s = sample_statistics(b.x0);
    CHECK(std::abs(s.mean[0]) < 0.03);
    CHECK(std::abs(s.mean[1]) < 0.03);
    CHECK(s.covariance(0, 0) == doctest::Approx(1.0).epsilon(0.03));
    CHECK(std::abs(s.covariance(0, 1)) < 0.03);
    CHECK(max_abs_diff(b.x1, Tensor::filled(20000, 2, 3.0)) == 0.0);
    for (double t : b.t) CHECK((t >= 0.0 && t < 1.0));
    CHECK_THROWS_AS(draw_flow_batch(data, 0, rng), ContractError);
  }

  TEST_CASE("fm_loss with a zero field and identity map is the mean squared displacement") {
    const FlowModel id = fixed_model(identity_map(2), Tensor::zeros(2, 2));
    RngStream rng(7);
    FlowBatch b{rng.normal_tensor(100, 2), rng.normal_tensor(100, 2), {}};
    for (int i = 0; i < 100; ++i) b.t.push_back(rng.uniform());
    const double expected = mean_sq_diff(b.x1, b.x0);
    for (LossSpace space : {LossSpace::Latent, LossSpace::Data}) {
      const FlowLoss l = fm_loss(id, b, {.space = space});
      CHECK(l.fm.item() == doctest::Approx(expected).epsilon(1e-13));
      // (I + 0) x0 - x1 is the same displacement.
      CHECK(l.alignment.item() == doctest::Approx(expected).epsilon(1e-13));
      CHECK(l.total.item() == doctest::Approx(2 * expected).epsilon(1e-13));
    }
    CHECK(evaluate_fm(id, b) == doctest::Approx(expected).epsilon(1e-13));
  }

  TEST_CASE("fm_loss vanishes for the exact field of a linear-Gaussian pair") {
    // x1 = M x0, so z_t = ((1-t) I + t M) x0 and the exact field is
    // A_t = (M - I) ((1-t) I + t M)^-1.
    const RowMatrix mm = Tensor::matrix({{2.0, 0.5}, {0.5, 1.5}}).to_eigen();
    const RowMatrix id = RowMatrix::Identity(2, 2);
    auto schedule = [mm, id](double t) -> Tensor {
      return Tensor::from_eigen((mm - id) * ((1.0 - t) * id + t * mm).inverse());
    };
    const FlowModel m(identity_map(2), std::make_shared<ScheduleField>(2, schedule));
    RngStream rng(8);
    FlowBatch b;
    b.x0 = rng.normal_tensor(500, 2);
    b.x1 = matmul(b.x0, Tensor::from_eigen(mm.transpose()));
    for (int i = 0; i < 500; ++i) b.t.push_back(rng.uniform());
    const double scale = mean_sq_diff(b.x1, b.x0);
    const FlowLoss l = fm_loss(m, b);
    CHECK(l.fm.item() < 1e-24 * scale);
    CHECK(l.alignment.item() < 1e-24 * scale);
    CHECK(fm_loss(m, b, {.space = LossSpace::Data}).fm.item() < 1e-24 * scale);
  }

  TEST_CASE("fm_loss gradients match finite differences") {
    const FlowModel m = random_model(9, small_options(0.5));
    const Tensor data = make_dataset("two-moons", 64, 10);
    for (LossSpace space : {LossSpace::Latent, LossSpace::Data}) {
      for (std::uint64_t point = 0; point < 2; ++point) {
        RngStream rng(11 + point);
        const FlowBatch b = draw_flow_batch(data, 6, rng);
        const auto report = grad_check([&] { return fm_loss(m, b, {.space = space}).total; }, m.parameters());
        INFO("worst " << report.worst());
        CHECK(report.passed());
      }
    }
  }

  TEST_CASE("fm_loss shape errors") {
    const FlowModel m = random_model(12, small_options());
    FlowBatch b{Tensor::zeros(4, 2), Tensor::zeros(4, 2), {0.1, 0.2}};
    CHECK_THROWS_AS(fm_loss(m, b), ContractError);
    b.x1 = Tensor::zeros(3, 2);
    CHECK_THROWS_AS(fm_loss(m, b), DimensionError);
  }

  TEST_CASE("euler sampler") {
    const Tensor x0 = RngStream(13).normal_tensor(50, 2);
    const FlowModel still = fixed_model(identity_map(2), Tensor::zeros(2, 2));
    CHECK(max_abs_diff(euler_sample(still, x0, 1), x0) == 0.0);

    for (double a : {0.7, -0.4}) {
      for (std::size_t n : {1u, 7u, 100u}) {
        const FlowModel lin = fixed_model(identity_map(1), scalar_matrix(a));
        const double expected = std::pow(1.0 + a / static_cast<double>(n), static_cast<double>(n)) * 1.3;
        CHECK(euler_sample(lin, Tensor::row({1.3}), n)[0] == doctest::Approx(expected).epsilon(1e-13));
      }
    }

    const FlowModel m = random_model(14, small_options(1.0));
    std::vector<Tensor> traj;
    const Tensor latent = euler_sample(m, x0, 100, StepPath::Latent, &traj);
    CHECK(traj.size() == 101);
    CHECK(max_abs_diff(traj.back(), latent) == 0.0);
    const Tensor data_path = euler_sample(m, x0, 100, StepPath::Data);
    CHECK(max_abs_diff(latent, data_path) < 1e-8);

    CHECK_THROWS_AS(euler_sample(m, x0, 0), ContractError);
    CHECK_THROWS_AS(euler_sample(m, Tensor::zeros(3, 3), 4), DimensionError);
    const FlowModel blowup = fixed_model(identity_map(1), scalar_matrix(1e300));
    CHECK_THROWS_AS(euler_sample(blowup, Tensor::row({1e10}), 2), NumericError);
  }

  TEST_CASE("euler collapse") {
    const FlowModel m = random_model(15, small_options(1.0));
    const Tensor b1 = collapse(m, 1, Scheme::Euler).b;
    CHECK(max_abs_diff(b1, Tensor::identity(2) + m.field()->matrix_at(0.0)) < 1e-15);

    const FlowModel lin = fixed_model(identity_map(3), 0.8 * Tensor::identity(3));
    const Tensor b = collapse_matrix(*lin.field(), 50, Scheme::Euler);
    CHECK(max_abs_diff(b, std::pow(1.016, 50.0) * Tensor::identity(3)) < 1e-13);

    const Tensor x0 = RngStream(16).normal_tensor(200, 2);
    for (std::size_t n : {1u, 10u, 100u, 1000u}) {
      const CollapsedOperator op = collapse(m, n, Scheme::Euler);
      CHECK(op.steps == n);
      CHECK(op.model_checksum == m.checksum());
      const double rel = relative_difference(one_step_sample(m, op.b, x0), euler_sample(m, x0, n));
      INFO("N=" << n << " rel=" << rel);
      CHECK(rel < 1e-6);
    }
    CHECK_THROWS_AS(collapse(m, 0, Scheme::Euler), ContractError);
  }

  TEST_CASE("rk4 collapse") {
    const Tensor a = Tensor::matrix({{0.3, -1.2, 0.5}, {0.9, 0.1, -0.4}, {0.2, 0.7, -0.6}});
    const FlowModel constant_a = fixed_model(identity_map(3), a);
    CHECK(max_abs_diff(rk4_step_matrix(*constant_a.field(), 0.0, 1.0), taylor4(a)) < 1e-12);
    CHECK(max_abs_diff(collapse_matrix(*constant_a.field(), 1, Scheme::Rk4), taylor4(a)) < 1e-12);

    const FlowModel unit = fixed_model(identity_map(1), scalar_matrix(1.0));
    CHECK(collapse_matrix(*unit.field(), 1, Scheme::Rk4)[0] == doctest::Approx(2.708333333333333).epsilon(1e-15));

    const FlowModel m = random_model(17, small_options(1.0));
    const Tensor x0 = RngStream(18).normal_tensor(200, 2);
    for (std::size_t n : {1u, 10u, 100u}) {
      const Tensor b = collapse(m, n, Scheme::Rk4).b;
      const double rel = relative_difference(one_step_sample(m, b, x0), rk4_sample(m, x0, n));
      INFO("N=" << n << " rel=" << rel);
      CHECK(rel < 1e-8);
    }
    CHECK(max_abs_diff(sample(m, x0, 5, Scheme::Rk4), rk4_sample(m, x0, 5)) == 0.0);
    CHECK(max_abs_diff(sample(m, x0, 5, Scheme::Euler), euler_sample(m, x0, 5)) == 0.0);
  }

  TEST_CASE("scheme names") {
    CHECK(parse_scheme("euler") == Scheme::Euler);
    CHECK(parse_scheme("rk4") == Scheme::Rk4);
    CHECK(to_string(Scheme::Rk4) == "rk4");
    CHECK_THROWS_AS(parse_scheme("heun"), ConfigError);
  }

  TEST_CASE("one-step sampling") {
    const FlowModel m = random_model(19);
    const Tensor x0 = RngStream(20).normal_tensor(1000, 2);
    CHECK(max_abs_diff(one_step_sample(m, Tensor::identity(2), x0), x0) < 1e-9);
    CHECK_THROWS_AS(one_step_sample(m, Tensor::identity(3), x0), DimensionError);

    const Tensor out = one_step_sample(m, collapse(m, 100, Scheme::Euler).b, x0);
    CHECK(out.all_finite());
    const SampleStats s = sample_statistics(out);
    CHECK(s.mean.all_finite());
    CHECK(s.covariance(0, 1) == doctest::Approx(s.covariance(1, 0)));
  }

  TEST_CASE("sample statistics") {
    const Tensor x = Tensor::matrix({{1.0, 2.0}, {3.0, 2.0}, {5.0, 8.0}});
    const SampleStats s = sample_statistics(x);
    CHECK(max_abs_diff(s.mean, Tensor::row({3.0, 4.0})) < 1e-15);
    CHECK(max_abs_diff(s.covariance, Tensor::matrix({{4.0, 6.0}, {6.0, 12.0}})) < 1e-14);
    CHECK_THROWS_AS(sample_statistics(Tensor::zeros(1, 2)), ContractError);
  }

  TEST_CASE("encoding and interpolation endpoints") {
    const FlowModel m = random_model(21, small_options(1.0));
    const Tensor b = collapse(m, 100, Scheme::Euler).b;
    RngStream rng(22);
    const Tensor x1 = rng.normal_tensor(100, 2);
    const Tensor x2 = rng.normal_tensor(100, 2);
    const Linearizer f = collapsed_linearizer(m, b);
    CHECK(max_abs_diff(f(encode(m, b, x1)), x1) < 1e-6);
    for (Blend blend : {Blend::Induced, Blend::Euclidean}) {
      CHECK(max_abs_diff(latent_interpolate(m, b, x1, x2, 0.0, blend), x1) < 1e-6);
      CHECK(max_abs_diff(latent_interpolate(m, b, x1, x2, 1.0, blend), x2) < 1e-6);
    }
    const Tensor mid = latent_interpolate(m, b, x1, x2, 0.5);
    CHECK(mid.all_finite());
  }

  TEST_CASE("induced blend on an identity map is the Euclidean blend") {
    const FlowModel id = fixed_model(identity_map(2), Tensor::matrix({{0.5, 0.1}, {-0.2, 0.3}}));
    const Tensor b = collapse(id, 10, Scheme::Euler).b;
    RngStream rng(23);
    const Tensor x1 = rng.normal_tensor(10, 2);
    const Tensor x2 = rng.normal_tensor(10, 2);
    CHECK(max_abs_diff(latent_interpolate(id, b, x1, x2, 0.3, Blend::Induced),
                       latent_interpolate(id, b, x1, x2, 0.3, Blend::Euclidean)) < 1e-12);
  }

  TEST_CASE("relative difference") {
    CHECK(relative_difference(Tensor::row({3.0, 4.0}), Tensor::row({3.0, 4.0})) == 0.0);
    CHECK(relative_difference(Tensor::row({3.0, 5.0}), Tensor::row({3.0, 4.0})) == doctest::Approx(0.2));
    CHECK(relative_difference(Tensor::row({1.0}), Tensor::row({0.0})) > 1e299);
    CHECK_THROWS_AS(relative_difference(Tensor::row({1.0}), Tensor::row({1.0, 2.0})), DimensionError);
  }

  TEST_CASE("training is deterministic and reduces the loss") {
    const Tensor data = make_dataset("two-moons", 512, 24);
    FlowTrainOptions o;
    o.steps = 60;
    o.batch = 32;
    o.log_every = 20;
    o.eval_size = 128;
    auto run = [&] {
      FlowModel m = random_model(25, small_options());
      const FlowTrainResult r = train_flow(m, data, o);
      return std::make_pair(m.checksum(), r);
    };
    const auto [c1, r1] = run();
    const auto [c2, r2] = run();
    CHECK(c1 == c2);
    REQUIRE(r1.log.size() == 3);
    CHECK(r1.log[2].step == 60);
    CHECK(r1.final_eval_fm == r2.final_eval_fm);
    CHECK(r1.final_eval_fm < r1.initial_eval_fm);
    CHECK(c1 != random_model(25, small_options()).checksum());
  }

  TEST_CASE("zero training steps log the initial state") {
    const Tensor data = make_dataset("8-gaussians", 64, 26);
    FlowModel m = random_model(27, small_options());
    const std::uint32_t before = m.checksum();
    FlowTrainOptions o;
    o.steps = 0;
    o.batch = 16;
    o.eval_size = 32;
    const FlowTrainResult r = train_flow(m, data, o);
    REQUIRE(r.log.size() == 1);
    CHECK(r.log[0].step == 0);
    CHECK(r.final_eval_fm == r.initial_eval_fm);
    CHECK(m.checksum() == before);
  }

  TEST_CASE("training reports the failing step") {
    Tensor data = make_dataset("two-moons", 16, 28);
    FlowModel m = random_model(29, small_options());
    FlowTrainOptions o;
    o.steps = 5;
    o.batch = 4;
    o.eval_size = 4;
    // Squares of 1e200 overflow in the first loss evaluation.
    try {
      train_flow(m, 1e200 * data, o);
      FAIL("expected a NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("failed at step 0") != std::string::npos);
    }
    data(3, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train_flow(m, data, o), NumericError);
    CHECK_THROWS_AS(train_flow(m, Tensor::zeros(4, 3), o), DimensionError);
  }
}

TEST_SUITE("datasets") {
  TEST_CASE("generators are deterministic and shaped") {
    for (const std::string& name : dataset_names()) {
      const Tensor a = make_dataset(name, 300, 1);
      CHECK(a.rows() == 300);
      CHECK(a.cols() == 2);
      CHECK(a.all_finite());
      CHECK(a == make_dataset(name, 300, 1));
      CHECK_FALSE(a == make_dataset(name, 300, 2));
    }
    CHECK_THROWS_AS(make_dataset("spirals", 10, 0), ConfigError);
  }

  TEST_CASE("eight gaussians has eight balanced modes") {
    RngStream rng(2);
    const Tensor x = eight_gaussians(8000, rng);
    const Tensor centers = eight_gaussian_centers();
    REQUIRE(centers.rows() == 8);
    std::vector<int> counts(8, 0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < 8; ++c) {
        const double d = std::hypot(x(i, 0) - centers(c, 0), x(i, 1) - centers(c, 1));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      CHECK(best_d < 1.0);
      ++counts[best];
    }
    for (int c : counts) CHECK(std::abs(c - 1000) < 150);
  }

  TEST_CASE("two moons is roughly centred with two arcs") {
    RngStream rng(3);
    const Tensor x = two_moons(4000, rng);
    const SampleStats s = sample_statistics(x);
    CHECK(std::abs(s.mean[0]) < 0.1);
    CHECK(std::abs(s.mean[1]) < 0.1);
    CHECK(s.covariance(0, 0) > s.covariance(1, 1));
  }

  TEST_CASE("checkerboard stays in its square") {
    RngStream rng(4);
    const Tensor x = checkerboard(2000, rng);
    CHECK(x.max_abs() <= 4.0);
  }

  TEST_CASE("csv ingestion") {
    const auto dir = std::filesystem::temp_directory_path() / "linearizer_csv_test";
    std::filesystem::create_directories(dir);
    const auto good = dir / "good.csv";
    std::ofstream(good) << "x,y\n1.5,2\n-3,4e-1\n";
    const Tensor t = ingest_csv(good);
    CHECK(t == Tensor::matrix({{1.5, 2.0}, {-3.0, 0.4}}));

    const auto bad = dir / "bad.csv";
    std::ofstream(bad) << "1,2\n3,oops\n";
    try {
      ingest_csv(bad);
      FAIL("expected an IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
    const auto ragged = dir / "ragged.csv";
    std::ofstream(ragged) << "1,2\n3\n";
    CHECK_THROWS_AS(ingest_csv(ragged), IoError);
    const auto empty = dir / "empty.csv";
    std::ofstream(empty) << "a,b\n";
    CHECK_THROWS_AS(ingest_csv(empty), IoError);
    CHECK_THROWS_AS(ingest_csv(dir / "missing.csv"), IoError);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("embed and truncate") {
    const Tensor x = Tensor::matrix({{1.0, 2.0}});
    const Tensor e = embed(x, 4);
    CHECK(e == Tensor::matrix({{1.0, 2.0, 0.0, 0.0}}));
    CHECK(truncate_cols(e, 2) == x);
    CHECK_THROWS_AS(embed(e, 2), DimensionError);
  }
}
