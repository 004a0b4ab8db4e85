// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#include "linearizer/app.hpp"
#include "linearizer/checkpoint.hpp"
#include "linearizer/checksum.hpp"
#include "linearizer/config.hpp"
#include "linearizer/datasets.hpp"
#include "linearizer/flow.hpp"
#include "linearizer/gradcheck.hpp"
#include "linearizer/ign.hpp"
#include "linearizer/linearizer.hpp"

using namespace linearizer;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    passed = passed && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [FAILED]");
  }
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// "name=value < tol"
std::string below(const std::string& name, double value, double tol) {
  return name + "=" + sci(value) + " < " + sci(tol);
}

bool lt(double value, double tol) { return std::isfinite(value) && value < tol; }

void require_below(Outcome& o, const std::string& name, double value, double tol) {
  o.require(lt(value, tol), below(name, value, tol));
}

void require_runtime(Outcome& o, double secs, double limit) {
  o.require(secs < limit, "runtime " + sci(secs) + " s < " + sci(limit) + " s");
}

MapPtr coupling_stack(std::size_t n, std::uint64_t seed) {
  StackOptions o;
  o.dim = n;
  o.blocks = 6;
  RngStream rng(seed);
  return make_coupling_stack(o, rng);
}

std::vector<double> scalars(RngStream& rng, std::size_t count) {
  std::vector<double> a(count);
  for (double& v : a) v = rng.uniform(-2.0, 2.0);
  return a;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  }
  return m;
}

Outcome axioms() {
  const auto start = Clock::now();
  Outcome o;
  RngStream rng(101);
  const std::vector<std::pair<std::string, MapPtr>> maps{
      {"identity", identity_map(4)}, {"cube", AnalyticBijection::cube(4)}, {"coupling", coupling_stack(4, 102)}};
  for (const auto& [name, g] : maps) {
    const AxiomReport r = axiom_suite(InducedSpace(g), rng, {.trials = 1000, .tolerance = 1e-6});
    o.require(r.passed(), below(name + " worst of 9", r.worst(), 1e-6));
  }
  require_runtime(o, seconds_since(start), 30.0);
  return o;
}

Outcome superposition() {
  const auto start = Clock::now();
  Outcome o;
  const std::size_t n = 4;
  const MapPtr gx = coupling_stack(n, 201);
  const MapPtr gy = coupling_stack(n, 202);
  RngStream rng(203);
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
    require_below(o, name, superposition_residual(f, x1, x2, scalars(rng, 1000), scalars(rng, 1000)), 1e-6);
  }
  require_runtime(o, seconds_since(start), 30.0);
  return o;
}

Outcome composition() {
  Outcome o;
  const std::size_t n = 3;
  RngStream rng(301);
  const Linearizer f1(coupling_stack(n, 302), coupling_stack(n, 303), std::make_shared<DenseCore>(rng.normal_tensor(n, n)));
  const Linearizer f2(f1.gy(), coupling_stack(n, 304), std::make_shared<DenseCore>(rng.normal_tensor(n, n)));
  const Tensor x = sample_ball(rng, 100, n, 3.0);
  require_below(o, "max |composed - sequential|", max_row_distance(compose(f2, f1)(x), f2(f1(x))), 1e-8);
  return o;
}

Outcome operator_power() {
  Outcome o;
  const std::size_t n = 3;
  RngStream rng(401);
  const Linearizer f =
      Linearizer::shared(coupling_stack(n, 402), std::make_shared<DenseCore>(0.5 * rng.normal_tensor(n, n)));
  const Tensor x = sample_ball(rng, 100, n, 3.0);
  Tensor y = x;
  for (int i = 0; i < 5; ++i) y = f(y);
  require_below(o, "max |power(f,5) - f^5|", max_row_distance(power(f, 5)(x), y), 1e-6);
  return o;
}

Outcome transpose_adjoint() {
  Outcome o;
  RngStream rng(501);
  const Linearizer f(coupling_stack(4, 502), coupling_stack(3, 503), std::make_shared<DenseCore>(rng.normal_tensor(3, 4)));
  const Tensor x = sample_ball(rng, 1000, 4, 3.0);
  const Tensor y = sample_ball(rng, 1000, 3, 3.0);
  require_below(o, "adjoint relative error", adjoint_relative_error(f, transpose(f), x, y), 1e-8);
  return o;
}

Outcome svd_transport() {
  Outcome o;
  RngStream rng(601);
  const Linearizer f(coupling_stack(4, 602), coupling_stack(3, 603), std::make_shared<DenseCore>(rng.normal_tensor(3, 4)));
  const LinearizerSvd s = svd(f);
  const InducedSpace xs = f.input_space();
  const InducedSpace ys = f.output_space();
  double transport = 0.0;
  std::size_t positive = 0;
  for (std::size_t i = 0; i < s.sigmas.size(); ++i) {
    if (s.sigmas[i] <= 0.0) continue;
    ++positive;
    transport = std::max(transport, ys.residual(f(s.v_tilde.row_at(i)), ys.odot(s.sigmas[i], s.u_tilde.row_at(i))));
  }
  double gram = 0.0;
  const std::size_t k = s.sigmas.size();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double target = i == j ? 1.0 : 0.0;
      gram = std::max(gram, std::abs(xs.inner(s.v_tilde.row_at(i), s.v_tilde.row_at(j))[0] - target));
      gram = std::max(gram, std::abs(ys.inner(s.u_tilde.row_at(i), s.u_tilde.row_at(j))[0] - target));
    }
  }
  o.require(positive == 3, std::to_string(positive) + " positive singular values");
  require_below(o, "transport", transport, 1e-6);
  require_below(o, "gram", gram, 1e-8);
  return o;
}

Outcome penrose() {
  Outcome o;
  RngStream rng(701);
  const Tensor a = matmul(rng.normal_tensor(4, 2), rng.normal_tensor(2, 4));
  const Linearizer f(coupling_stack(4, 702), coupling_stack(4, 703), std::make_shared<DenseCore>(a));
  RngStream probes(704);
  const PenroseResiduals p = penrose_residuals(f, pinv(f), 1000, probes);
  for (std::size_t i = 0; i < 4; ++i) require_below(o, "identity " + std::to_string(i + 1), p.residuals[i], 1e-6);
  return o;
}

void euler_collapse_checks(Outcome& o, const FlowModel& m, const Tensor& x0, const std::string& label) {
  for (std::size_t n : {1u, 10u, 100u, 1000u}) {
    const Tensor b = collapse(m, n, Scheme::Euler).b;
    require_below(o, label + " N=" + std::to_string(n),
                  relative_difference(one_step_sample(m, b, x0), euler_sample(m, x0, n)), 1e-6);
  }
}

Outcome euler_collapse(const FlowModel& trained) {
  const auto start = Clock::now();
  Outcome o;
  RngStream rng(801);
  FlowOptions options;
  options.hyper.output_gain = 1.0;
  const FlowModel random = FlowModel::create(options, rng);
  const Tensor x0 = RngStream(802).normal_tensor(1000, 2);
  euler_collapse_checks(o, random, x0, "random");
  euler_collapse_checks(o, trained, x0, "trained");
  require_runtime(o, seconds_since(start), 60.0);
  return o;
}

// Degree-4 Taylor polynomial of exp(a) by Horner's rule.
Tensor taylor4(const Tensor& a) {
  const Eigen::MatrixXd m = to_eigen(a);
  const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(m.rows(), m.cols());
  const Eigen::MatrixXd p = i + m * (i + m / 2.0 * (i + m / 3.0 * (i + m / 4.0)));
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = p(r, c);
  }
  return out;
}

Outcome rk4_collapse() {
  Outcome o;
  RngStream rng(901);
  const Tensor a = rng.normal_tensor(3, 3, 0.6);
  const auto field = ScheduleField::constant(a);
  // The single-step matrix is exp(a) truncated after the quartic term.
  require_below(o, "(a) |M - taylor4|", max_abs_diff(rk4_step_matrix(*field, 0.0, 1.0), taylor4(a)), 1e-12);

  FlowOptions options;
  options.hyper.output_gain = 1.0;
  const FlowModel m = FlowModel::create(options, rng);
  const Tensor x0 = RngStream(902).normal_tensor(1000, 2);
  double worst = 0.0;
  for (std::size_t n : {1u, 10u, 100u}) {
    const Tensor b = collapse(m, n, Scheme::Rk4).b;
    worst = std::max(worst, relative_difference(one_step_sample(m, b, x0), rk4_sample(m, x0, n)));
  }
  require_below(o, "(b) one-step vs step-by-step", worst, 1e-8);

  // Scaling-and-squaring exponential from Eigen as the exact solution.
  const Eigen::MatrixXd exact = to_eigen(a).exp();
  std::vector<double> log_n, log_err;
  std::string errors;
  for (std::size_t n : {4u, 8u, 16u, 32u}) {
    const double err = (to_eigen(collapse_matrix(*field, n, Scheme::Rk4)) - exact).norm() / exact.norm();
    log_n.push_back(std::log(static_cast<double>(n)));
    log_err.push_back(std::log(err));
    errors += (errors.empty() ? "" : ",") + sci(err);
  }
  const double mx = std::accumulate(log_n.begin(), log_n.end(), 0.0) / 4.0;
  const double my = std::accumulate(log_err.begin(), log_err.end(), 0.0) / 4.0;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    sxy += (log_n[i] - mx) * (log_err[i] - my);
    sxx += (log_n[i] - mx) * (log_n[i] - mx);
  }
  const double slope = sxy / sxx;
  o.require(std::abs(slope + 4.0) <= 0.5, "(c) slope " + sci(slope) + " within 0.5 of -4 (errors " + errors + ")");
  return o;
}

struct FlowRun {
  Checkpoint ckpt;
  double seconds = 0.0;
  int code = 0;
  std::string err;
};

FlowRun train_flow_cli(const fs::path& dir) {
  std::ostringstream out, err;
  const auto start = Clock::now();
  FlowRun r;
  r.code = run_cli({"train-flow", "--out-dir", dir.string()}, out, err);
  r.seconds = seconds_since(start);
  r.err = err.str();
  if (r.code == 0) r.ckpt = load_checkpoint(dir / "flow.ckpt");
  return r;
}

Outcome flow_training(const FlowRun& run, const FlowModel& trained) {
  Outcome o;
  o.require(run.code == 0, "train-flow exit " + std::to_string(run.code) + (run.err.empty() ? "" : " " + run.err));
  if (run.code != 0) return o;
  const double initial = run.ckpt.info.at("initial_eval_fm").get<double>();
  const double final_fm = run.ckpt.info.at("final_eval_fm").get<double>();
  o.require(final_fm <= 0.2 * initial, "fm " + sci(initial) + " -> " + sci(final_fm) + " (ratio " +
                                           sci(final_fm / initial) + " <= 0.2)");
  const Tensor x0 = RngStream(1001).normal_tensor(1000, 2);
  double worst = 0.0;
  for (std::size_t n : {1u, 10u, 100u, 1000u}) {
    const Tensor b = collapse(trained, n, Scheme::Euler).b;
    worst = std::max(worst, relative_difference(one_step_sample(trained, b, x0), euler_sample(trained, x0, n)));
  }
  require_below(o, "one-step vs multi-step", worst, 1e-6);
  require_runtime(o, run.seconds, 600.0);
  return o;
}

Outcome inversion(const FlowModel& trained) {
  Outcome o;
  const CollapsedOperator op = collapse(trained, 100, Scheme::Euler);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd_b(to_eigen(op.b));
  const auto sv = svd_b.singularValues();
  o.require(sv(sv.size() - 1) > kPinvRcond * sv(0), "B singular values " + sci(sv(0)) + ", " + sci(sv(sv.size() - 1)));
  const Linearizer f = collapsed_linearizer(trained, op.b);
  // Fresh draw: the training set uses a different data seed.
  const Tensor x = make_dataset("two-moons", 100, 1000003);
  require_below(o, "max |f(f+(x)) - x|", trained.space().residual(f(pinv(f)(x)), x), 1e-6);
  return o;
}

Outcome ign_idempotency(const fs::path& dir) {
  Outcome o;
  const Tensor probes = RngStream(1201).normal_tensor(1000, 16, 3.0);
  Config c;
  const IGNModel init = make_ign_model(c);
  require_below(o, "init", idempotency_residual(init.linearizer(), probes), 1e-6);

  std::ostringstream out, err;
  const int code = run_cli({"train-ign", "--out-dir", dir.string()}, out, err);
  o.require(code == 0, "train-ign exit " + std::to_string(code) + (err.str().empty() ? "" : " " + err.str()));
  if (code != 0) return o;
  const IGNModel trained = load_ign_model(load_checkpoint(dir / "ign.ckpt"));
  require_below(o, "trained", idempotency_residual(trained.linearizer(), probes), 1e-6);
  o.require(trained.rank() < trained.dim(),
            "rank " + std::to_string(trained.rank()) + " < " + std::to_string(trained.dim()) + " (w_sparse " +
                sci(c.ign.w_sparse) + ")");
  return o;
}

Outcome gradient_integrity() {
  Outcome o;
  const Tensor data = make_dataset("two-moons", 256, 1);
  double fm_worst = 0.0;
  for (std::uint64_t seed : {1301u, 1302u, 1303u}) {
    FlowOptions opt;
    opt.blocks = 2;
    opt.conditioner.width = 16;
    opt.hyper.features = 8;
    opt.hyper.width = 16;
    opt.hyper.output_gain = 0.5;
    RngStream rng(seed);
    const FlowModel m = FlowModel::create(opt, rng);
    RngStream batch_rng(seed + 100);
    const FlowBatch batch = draw_flow_batch(data, 16, batch_rng);
    for (LossSpace space : {LossSpace::Latent, LossSpace::Data}) {
      const auto r = grad_check([&] { return fm_loss(m, batch, {.space = space}).total; }, m.parameters());
      fm_worst = std::max(fm_worst, r.worst());
    }
  }
  require_below(o, "fm_loss worst relative error", fm_worst, 1e-4);

  double ign_worst = 0.0;
  for (std::uint64_t seed : {1311u, 1312u, 1313u}) {
    IGNOptions opt;
    opt.dim = 6;
    opt.blocks = 2;
    opt.conditioner.width = 16;
    opt.conditioner.output_gain = 0.5;
    RngStream rng(seed);
    const IGNModel m = IGNModel::create(opt, rng);
    const Tensor x = RngStream(seed + 100).normal_tensor(16, 6);
    const Tensor anchor = ign_probabilities(m);
    const auto r = grad_check([&] { return ign_loss(m, x, anchor).total; }, m.parameters());
    ign_worst = std::max(ign_worst, r.worst());
  }
  require_below(o, "ign_loss worst relative error", ign_worst, 1e-4);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const fs::path& first_dir, const fs::path& second_dir, const FlowRun& first) {
  Outcome o;
  const FlowRun second = train_flow_cli(second_dir);
  o.require(first.code == 0 && second.code == 0, "both runs exit 0");
  const std::string a = slurp(first_dir / "flow.ckpt");
  const std::string b = slurp(second_dir / "flow.ckpt");
  o.require(!a.empty() && a == b, "checkpoints byte-identical (" + std::to_string(a.size()) + " bytes, crc " +
                                      hex32(crc32_bytes({reinterpret_cast<const unsigned char*>(a.data()), a.size()})) +
                                      ")");
  return o;
}

Outcome guarded(const std::function<Outcome()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string work = (fs::temp_directory_path() / "linearizer_acceptance").string();
  app.add_option("--work-dir", work, "scratch directory for training runs");
  CLI11_PARSE(app, argc, argv);
  ::unsetenv(kOutDirEnv);
  const fs::path root(work);
  fs::remove_all(root);

  const std::vector<std::string> names{"vector-space axioms", "superposition",   "composition",
                                       "operator power",      "transpose adjoint", "svd transport",
                                       "penrose equations",   "euler collapse",    "rk4 collapse",
                                       "flow training",       "inversion",         "ign idempotency",
                                       "gradient integrity",  "determinism"};
  std::vector<Outcome> results(names.size());
  std::size_t printed = 0;
  auto emit = [&]() {
    while (printed < results.size() && !results[printed].detail.empty()) {
      std::cout << (results[printed].passed ? "PASS" : "FAIL") << "  " << printed + 1 << ". " << names[printed]
                << ": " << results[printed].detail << std::endl;
      ++printed;
    }
  };
  auto record = [&](std::size_t id, const std::function<Outcome()>& fn) {
    const auto start = Clock::now();
    results[id - 1] = guarded(fn);
    std::cerr << "criterion " << id << " finished in " << sci(seconds_since(start)) << " s" << std::endl;
    emit();
  };

  record(1, axioms);
  record(2, superposition);
  record(3, composition);
  record(4, operator_power);
  record(5, transpose_adjoint);
  record(6, svd_transport);
  record(7, penrose);

  // Criteria 8, 10, 11 and 14 share the default two-moons training run.
  std::cerr << "training the default flow model" << std::endl;
  FlowRun run;
  std::optional<FlowModel> trained;
  try {
    run = train_flow_cli(root / "run_a");
    if (run.code == 0) trained = load_flow_model(run.ckpt);
  } catch (const std::exception& e) {
    run.code = -1;
    run.err = e.what();
  }
  const auto no_model = [&]() { return Outcome{false, "no trained model: " + run.err}; };

  record(8, [&] { return trained ? euler_collapse(*trained) : no_model(); });
  record(9, rk4_collapse);
  record(10, [&] { return trained ? flow_training(run, *trained) : no_model(); });
  record(11, [&] { return trained ? inversion(*trained) : no_model(); });
  record(12, [&] { return ign_idempotency(root / "ign"); });
  record(13, gradient_integrity);
  record(14, [&] { return determinism(root / "run_a", root / "run_b", run); });

  const auto failed = std::count_if(results.begin(), results.end(), [](const Outcome& o) { return !o.passed; });
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << " (" << results.size()
            << " criteria)" << std::endl;
  fs::remove_all(root);
  return failed == 0 ? 0 : 1;
}
