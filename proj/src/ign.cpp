#include "linearizer/ign.hpp"

#include <cmath>

#include "linearizer/checksum.hpp"
#include "linearizer/errors.hpp"
#include "linearizer/induced.hpp"
#include "linearizer/optim.hpp"

namespace linearizer {

IGNModel::IGNModel(MapPtr g, std::shared_ptr<BinaryDiagonalCore> core, IGNWeights weights)
    : g_(std::move(g)), core_(std::move(core)), weights_(weights) {
  if (!g_ || !core_) throw ContractError("IGNModel needs a map and a core");
  if (core_->rows() != g_->dim()) throw DimensionError("IGN core and map dimensions differ");
}

IGNModel IGNModel::create(const IGNOptions& options, RngStream& rng) {
  StackOptions so;
  so.dim = options.dim;
  so.blocks = options.blocks;
  so.coupling = options.coupling;
  so.conditioner = options.conditioner;
  RngStream g_rng = rng.substream(0);
  MapPtr g = make_coupling_stack(so, g_rng);
  auto core = std::make_shared<BinaryDiagonalCore>(Tensor::filled(1, options.dim, options.initial_logit));
  return IGNModel(std::move(g), std::move(core), options.weights);
}

std::size_t IGNModel::rank() const {
  std::size_t r = 0;
  for (double v : core_->mask().data()) r += v == 1.0 ? 1 : 0;
  return r;
}

ParameterList IGNModel::parameters() const {
  ParameterList out = parameters_of(*g_, "g");
  core_->collect_parameters(out, "core");
  return out;
}

std::uint32_t IGNModel::checksum() const { return parameters_checksum(parameters()); }

Tensor ign_probabilities(const IGNModel& model) {
  NoGradGuard guard;
  return model.core()->probabilities().value();
}

IGNLoss ign_loss(const IGNModel& model, const Tensor& x, const std::optional<Tensor>& anchor) {
  if (x.rows() == 0) throw ContractError("IGN batch must be nonempty");
  if (x.cols() != model.dim()) throw DimensionError("IGN batch " + x.shape_string());
  const MapPtr& g = model.g();
  const double inv_b = 1.0 / static_cast<double>(x.rows());

  const Var xv = constant(x);
  const Var z = g->forward(xv);
  const Var lambda = model.core()->diagonal(anchor);
  const Var fx = g->inverse(z * lambda);

  IGNLoss out;
  out.rec = ops::scale(ops::sum(ops::square(fx - xv)), inv_b);
  out.sparse = ops::mean(lambda);
  // One evaluation of g at the ambient origin, broadcast over the batch.
  const Var g0 = g->forward(constant(Tensor::zeros(1, model.dim())));
  const Var latent_sq = ops::row_sum(ops::square(z - g0));
  const Var data_sq = constant(Tensor({x.rows(), 1}, row_dot(x, x)));
  out.iso = ops::scale(ops::sum(ops::abs(latent_sq - data_sq)), inv_b);

  const IGNWeights& w = model.weights();
  out.total = ops::scale(out.rec, w.rec) + ops::scale(out.sparse, w.sparse) + ops::scale(out.iso, w.iso);
  return out;
}

Tensor ign_probes(const IGNTrainOptions& options, std::size_t dim) {
  RngStream rng = RngStream(options.seed).substream(0x9a0beULL << 32);
  return rng.normal_tensor(options.probes, dim, options.probe_std);
}

std::vector<IGNMetrics> train_ign(IGNModel& model, const Tensor& data, const IGNTrainOptions& options,
                                  const IGNLogFn& on_log) {
  if (data.cols() != model.dim()) throw DimensionError("IGN training data " + data.shape_string());
  if (data.rows() == 0) throw ContractError("empty dataset");
  if (options.batch == 0) throw ContractError("IGN batch must be nonempty");
  if (!data.all_finite()) throw NumericError("training data contains non-finite values");

  const ParameterList params = model.parameters();
  Adam adam(params, {.lr = options.lr});
  const Tensor probes = options.probes > 0 ? ign_probes(options, model.dim()) : Tensor();
  const RngStream root(options.seed);
  const Tensor origin = Tensor::zeros(1, model.dim());

  std::vector<IGNMetrics> log;
  auto record = [&](std::size_t step, const IGNLoss& l) {
    IGNMetrics m;
    m.step = step;
    m.loss = l.total.item();
    m.rec = l.rec.item();
    m.sparse = l.sparse.item();
    m.iso = l.iso.item();
    m.rank = model.rank();
    m.g0_norm = forward(*model.g(), origin).frobenius();
    m.idempotency = options.probes > 0 ? idempotency_residual(model.linearizer(), probes) : 0.0;
    log.push_back(m);
    if (on_log) on_log(m);
  };
  auto draw = [&](std::size_t step) {
    RngStream rng = root.substream(step);
    std::vector<Tensor> rows;
    rows.reserve(options.batch);
    for (std::size_t i = 0; i < options.batch; ++i) rows.push_back(data.row_at(rng.below(data.rows())));
    return vstack(rows);
  };

  std::size_t current = 0;
  try {
    {
      NoGradGuard guard;
      record(0, ign_loss(model, draw(0)));
    }
    for (std::size_t step = 0; step < options.steps; ++step) {
      current = step + 1;
      adam.zero_grad();
      const IGNLoss l = ign_loss(model, draw(step));
      backward(l.total);
      adam.step();
      if (current == options.steps || (options.log_every > 0 && current % options.log_every == 0)) {
        record(current, l);
      }
    }
  } catch (const NumericError& e) {
    throw NumericError("IGN training failed at step " + std::to_string(current) + ": " + e.what());
  }
  return log;
}

}  // namespace linearizer
