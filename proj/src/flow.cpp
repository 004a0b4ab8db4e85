#include "linearizer/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "linearizer/checksum.hpp"
#include "linearizer/errors.hpp"
#include "linearizer/optim.hpp"

namespace linearizer {

void VelocityField::collect_parameters(ParameterList&, const std::string&) const {}

HyperField::HyperField(std::shared_ptr<const HyperCore> core) : core_(std::move(core)) {
  if (!core_) throw ContractError("HyperField needs a core");
  if (core_->rows() != core_->cols()) throw DimensionError("velocity operator must be square");
}

void HyperField::collect_parameters(ParameterList& out, const std::string& prefix) const {
  core_->collect_parameters(out, prefix);
}

ScheduleField::ScheduleField(std::size_t n, std::function<Tensor(double)> schedule)
    : n_(n), schedule_(std::move(schedule)) {}

std::shared_ptr<ScheduleField> ScheduleField::constant(Tensor a) {
  if (a.rows() != a.cols()) throw DimensionError("constant schedule needs a square matrix");
  const std::size_t n = a.rows();
  return std::make_shared<ScheduleField>(n, [a = std::move(a)](double) { return a; });
}

Tensor ScheduleField::matrix_at(double t) const {
  Tensor a = schedule_(t);
  if (a.rows() != n_ || a.cols() != n_) throw DimensionError("schedule returned " + a.shape_string());
  return a;
}

Var ScheduleField::apply(const Var& z, std::span<const double> t) const {
  if (z.cols() != n_ || t.size() != z.rows()) throw DimensionError("schedule field batch shape mismatch");
  std::vector<Tensor> rows;
  rows.reserve(t.size());
  for (double s : t) {
    const Tensor a = matrix_at(s);
    rows.push_back(Tensor({1, n_ * n_}, a.values()));
  }
  return ops::rowwise_matvec(linearizer::constant(vstack(rows)), z, n_);
}

FlowModel::FlowModel(MapPtr g, FieldPtr field) : g_(std::move(g)), field_(std::move(field)) {
  if (!g_ || !field_) throw ContractError("FlowModel needs a map and a velocity field");
  if (g_->dim() != field_->dim()) throw DimensionError("map and velocity field dimensions differ");
}

FlowModel FlowModel::create(const FlowOptions& options, RngStream& rng) {
  StackOptions so;
  so.dim = options.dim;
  so.blocks = options.blocks;
  so.coupling = CouplingType::Affine;
  so.conditioner = options.conditioner;
  RngStream g_rng = rng.substream(0);
  RngStream a_rng = rng.substream(1);
  MapPtr g = make_coupling_stack(so, g_rng);
  const std::size_t rank = std::min(options.rank, options.dim);
  auto core = std::make_shared<HyperCore>(options.dim, options.dim, rank, options.hyper, a_rng);
  return FlowModel(std::move(g), std::make_shared<HyperField>(std::move(core)));
}

ParameterList FlowModel::parameters() const {
  ParameterList out = parameters_of(*g_, "g");
  field_->collect_parameters(out, "A");
  return out;
}

std::uint32_t FlowModel::checksum() const { return parameters_checksum(parameters()); }

namespace {

// z A^T for a batch of row vectors.
Tensor apply_rows(const Tensor& z, const Tensor& a) { return matmul(z, transpose(a)); }

void check_pair(const FlowModel& model, const Tensor& x0, const Tensor& x1) {
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols() || x0.cols() != model.dim()) {
    throw DimensionError("flow pair shapes " + x0.shape_string() + " and " + x1.shape_string());
  }
}

Tensor column(std::span<const double> v) { return Tensor({v.size(), 1}, std::vector<double>(v.begin(), v.end())); }

}  // namespace

Tensor FlowModel::velocity(const Tensor& x, double t) const {
  return inverse(*g_, apply_rows(forward(*g_, x), field_->matrix_at(t)));
}

Tensor forward_interpolate(const FlowModel& model, const Tensor& x0, const Tensor& x1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("interpolation time must lie in [0, 1]");
  check_pair(model, x0, x1);
  const MapPtr& g = model.g();
  return inverse(*g, (1.0 - t) * forward(*g, x0) + t * forward(*g, x1));
}

Tensor target_velocity(const FlowModel& model, const Tensor& x0, const Tensor& x1) {
  check_pair(model, x0, x1);
  return model.space().ominus(x1, x0);
}

FlowBatch draw_flow_batch(const Tensor& data, std::size_t size, RngStream& rng) {
  if (size == 0) throw ContractError("flow batch must be nonempty");
  if (data.rows() == 0) throw ContractError("empty dataset");
  FlowBatch b;
  b.x0 = rng.normal_tensor(size, data.cols());
  std::vector<Tensor> rows;
  rows.reserve(size);
  for (std::size_t i = 0; i < size; ++i) rows.push_back(data.row_at(rng.below(data.rows())));
  b.x1 = vstack(rows);
  b.t.resize(size);
  for (double& t : b.t) t = rng.uniform();
  return b;
}

FlowLoss fm_loss(const FlowModel& model, const FlowBatch& batch, const FlowLossOptions& options) {
  check_pair(model, batch.x0, batch.x1);
  const std::size_t n = batch.x0.rows();
  if (n == 0 || batch.t.size() != n) throw ContractError("flow batch needs one time per pair");
  const MapPtr& g = model.g();
  const double inv_n = 1.0 / static_cast<double>(n);

  const Var z0 = g->forward(constant(batch.x0));
  const Var z1 = g->forward(constant(batch.x1));
  const Var tc = constant(column(batch.t));
  std::vector<double> one_minus(batch.t.size());
  std::transform(batch.t.begin(), batch.t.end(), one_minus.begin(), [](double t) { return 1.0 - t; });
  const Var zt = z0 * constant(column(one_minus)) + z1 * tc;
  const Var resid = z1 - z0 - model.field()->apply(zt, batch.t);

  FlowLoss out;
  if (options.space == LossSpace::Latent) {
    out.fm = ops::scale(ops::sum(ops::square(resid)), inv_n);
  } else {
    const Var origin = g->inverse(constant(Tensor::zeros(1, model.dim())));
    out.fm = ops::scale(ops::sum(ops::square(g->inverse(resid) - origin)), inv_n);
  }
  out.total = out.fm;
  if (options.alignment_weight != 0.0) {
    const std::vector<double> zero_t(n, 0.0);
    const Var mismatch = z0 + model.field()->apply(z0, zero_t) - z1;
    out.alignment = ops::scale(ops::sum(ops::square(mismatch)), inv_n);
    out.total = out.total + ops::scale(out.alignment, options.alignment_weight);
  } else {
    out.alignment = constant(Tensor::scalar(0.0));
  }
  return out;
}

double evaluate_fm(const FlowModel& model, const FlowBatch& batch, LossSpace space) {
  NoGradGuard guard;
  return fm_loss(model, batch, {.space = space, .alignment_weight = 0.0}).fm.item();
}

std::string to_string(Scheme scheme) { return scheme == Scheme::Euler ? "euler" : "rk4"; }

Scheme parse_scheme(const std::string& name) {
  if (name == "euler") return Scheme::Euler;
  if (name == "rk4") return Scheme::Rk4;
  throw ConfigError("scheme", "unknown scheme '" + name + "' (expected euler or rk4)");
}

namespace {

void require_steps(std::size_t steps) {
  if (steps == 0) throw ContractError("step count must be at least 1");
}

void require_finite(const Tensor& x, std::size_t step) {
  if (!x.all_finite()) throw NumericError("sampler state became non-finite at step " + std::to_string(step));
}

}  // namespace

Tensor euler_sample(const FlowModel& model, const Tensor& x0, std::size_t steps, StepPath path,
                    std::vector<Tensor>* trajectory) {
  require_steps(steps);
  if (x0.cols() != model.dim()) throw DimensionError("sampler input " + x0.shape_string());
  const double dt = 1.0 / static_cast<double>(steps);
  const MapPtr& g = model.g();
  if (trajectory) {
    trajectory->clear();
    trajectory->push_back(x0);
  }
  if (path == StepPath::Latent) {
    Tensor z = forward(*g, x0);
    for (std::size_t i = 0; i < steps; ++i) {
      z = apply_rows(z, euler_step_matrix(*model.field(), static_cast<double>(i) * dt, dt));
      require_finite(z, i + 1);
      if (trajectory) trajectory->push_back(inverse(*g, z));
    }
    return inverse(*g, z);
  }
  // x <- x (+) (dt (.) f(x, t)), with every operation leaving and re-entering g.
  const InducedSpace space = model.space();
  Tensor x = x0;
  for (std::size_t i = 0; i < steps; ++i) {
    x = space.oplus(x, space.odot(dt, model.velocity(x, static_cast<double>(i) * dt)));
    require_finite(x, i + 1);
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

Tensor rk4_sample(const FlowModel& model, const Tensor& x0, std::size_t steps, std::vector<Tensor>* trajectory) {
  require_steps(steps);
  if (x0.cols() != model.dim()) throw DimensionError("sampler input " + x0.shape_string());
  const double dt = 1.0 / static_cast<double>(steps);
  const MapPtr& g = model.g();
  const VelocityField& field = *model.field();
  if (trajectory) {
    trajectory->clear();
    trajectory->push_back(x0);
  }
  Tensor z = forward(*g, x0);
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    const Tensor a0 = field.matrix_at(t);
    const Tensor ah = field.matrix_at(t + 0.5 * dt);
    const Tensor a1 = field.matrix_at(t + dt);
    const Tensor k1 = apply_rows(z, a0);
    const Tensor k2 = apply_rows(z + (0.5 * dt) * k1, ah);
    const Tensor k3 = apply_rows(z + (0.5 * dt) * k2, ah);
    const Tensor k4 = apply_rows(z + dt * k3, a1);
    z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    require_finite(z, i + 1);
    if (trajectory) trajectory->push_back(inverse(*g, z));
  }
  return inverse(*g, z);
}

Tensor sample(const FlowModel& model, const Tensor& x0, std::size_t steps, Scheme scheme,
              std::vector<Tensor>* trajectory) {
  return scheme == Scheme::Euler ? euler_sample(model, x0, steps, StepPath::Latent, trajectory)
                                 : rk4_sample(model, x0, steps, trajectory);
}

Tensor euler_step_matrix(const VelocityField& field, double t, double dt) {
  return Tensor::identity(field.dim()) + dt * field.matrix_at(t);
}

Tensor rk4_step_matrix(const VelocityField& field, double t, double dt) {
  const Tensor id = Tensor::identity(field.dim());
  const Tensor a0 = field.matrix_at(t);
  const Tensor ah = field.matrix_at(t + 0.5 * dt);
  const Tensor a1 = field.matrix_at(t + dt);
  const Tensor k1 = a0;
  const Tensor k2 = matmul(ah, id + (0.5 * dt) * k1);
  const Tensor k3 = matmul(ah, id + (0.5 * dt) * k2);
  const Tensor k4 = matmul(a1, id + dt * k3);
  return id + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Tensor collapse_matrix(const VelocityField& field, std::size_t steps, Scheme scheme) {
  require_steps(steps);
  const double dt = 1.0 / static_cast<double>(steps);
  Tensor b = Tensor::identity(field.dim());
  for (std::size_t i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    const Tensor m = scheme == Scheme::Euler ? euler_step_matrix(field, t, dt) : rk4_step_matrix(field, t, dt);
    b = matmul(m, b);
  }
  if (!b.all_finite()) throw NumericError("collapsed operator is non-finite");
  return b;
}

CollapsedOperator collapse(const FlowModel& model, std::size_t steps, Scheme scheme) {
  return {collapse_matrix(*model.field(), steps, scheme), scheme, steps, model.checksum()};
}

Tensor one_step_sample(const FlowModel& model, const Tensor& b, const Tensor& x0) {
  if (b.rows() != model.dim() || b.cols() != model.dim()) {
    throw DimensionError("collapsed operator " + b.shape_string() + " does not match model dimension");
  }
  const MapPtr& g = model.g();
  return inverse(*g, apply_rows(forward(*g, x0), b));
}

Linearizer collapsed_linearizer(const FlowModel& model, const Tensor& b) {
  return Linearizer::shared(model.g(), std::make_shared<DenseCore>(b));
}

Tensor encode(const FlowModel& model, const Tensor& b, const Tensor& x) {
  return pinv(collapsed_linearizer(model, b))(x);
}

Tensor latent_interpolate(const FlowModel& model, const Tensor& b, const Tensor& x1, const Tensor& x2, double a,
                          Blend blend) {
  check_pair(model, x1, x2);
  const Linearizer f = collapsed_linearizer(model, b);
  const Linearizer f_dag = pinv(f);
  const Tensor c1 = f_dag(x1);
  const Tensor c2 = f_dag(x2);
  Tensor code;
  if (blend == Blend::Induced) {
    const InducedSpace space = model.space();
    code = space.oplus(space.odot(1.0 - a, c1), space.odot(a, c2));
  } else {
    code = (1.0 - a) * c1 + a * c2;
  }
  return f(code);
}

SampleStats sample_statistics(const Tensor& x) {
  if (x.rows() < 2) throw ContractError("sample statistics need at least two rows");
  const ConstMatrixMap m = x.as_matrix();
  const RowMatrix mean = m.colwise().mean();
  const RowMatrix centered = m.rowwise() - mean.row(0);
  const RowMatrix cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  return {Tensor::from_eigen(mean), Tensor::from_eigen(cov)};
}

double relative_difference(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("relative_difference shape mismatch");
  const double d = (a - b).frobenius();
  const double r = d / std::max(b.frobenius(), 1e-300);
  return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
}

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1ULL << 32;

}  // namespace

FlowBatch flow_eval_batch(const Tensor& data, const FlowTrainOptions& options) {
  RngStream rng = RngStream(options.seed).substream(kEvalStream);
  return draw_flow_batch(data, options.eval_size, rng);
}

FlowTrainResult train_flow(FlowModel& model, const Tensor& data, const FlowTrainOptions& options,
                           const FlowLogFn& on_log) {
  if (data.cols() != model.dim()) throw DimensionError("training data " + data.shape_string());
  if (!data.all_finite()) throw NumericError("training data contains non-finite values");
  const ParameterList params = model.parameters();
  Adam adam(params, {.lr = options.lr});
  const FlowBatch eval = flow_eval_batch(data, options);
  const RngStream root(options.seed);

  FlowTrainResult result;
  std::size_t current = 0;  // step being run, for diagnostics
  auto record = [&](std::size_t step, double loss, double fm, double alignment) {
    FlowMetrics m{step, loss, fm, alignment, evaluate_fm(model, eval, options.loss.space)};
    result.log.push_back(m);
    if (on_log) on_log(m);
  };
  try {
    result.initial_eval_fm = evaluate_fm(model, eval, options.loss.space);
    if (options.steps == 0) {
      NoGradGuard guard;
      RngStream rng = root.substream(0);
      const FlowLoss l = fm_loss(model, draw_flow_batch(data, options.batch, rng), options.loss);
      record(0, l.total.item(), l.fm.item(), l.alignment.item());
    }
    for (std::size_t step = 0; step < options.steps; ++step) {
      current = step + 1;
      RngStream rng = root.substream(step);
      const FlowBatch batch = draw_flow_batch(data, options.batch, rng);
      adam.zero_grad();
      const FlowLoss l = fm_loss(model, batch, options.loss);
      backward(l.total);
      adam.step();
      if (current == options.steps || (options.log_every > 0 && current % options.log_every == 0)) {
        record(current, l.total.item(), l.fm.item(), l.alignment.item());
      }
    }
  } catch (const NumericError& e) {
    throw NumericError("flow training failed at step " + std::to_string(current) + ": " + e.what());
  }
  result.final_eval_fm = result.log.empty() ? result.initial_eval_fm : result.log.back().eval_fm;
  return result;
}

}  // namespace linearizer
