#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "linearizer/core.hpp"
#include "linearizer/invertible.hpp"
#include "linearizer/linearizer.hpp"

namespace linearizer {

struct IGNWeights {
  double rec = 1.0;
  double sparse = 0.75;
  double iso = 0.001;
};

struct IGNOptions {
  std::size_t dim = 16;
  std::size_t blocks = 6;
  CouplingType coupling = CouplingType::Additive;
  CouplingOptions conditioner{};
  // Every diagonal entry starts switched on: sigmoid(1) ~ 0.73.
  double initial_logit = 1.0;
  IGNWeights weights{};
};

// f(x) = g^-1(L g(x)) with L a {0,1} diagonal, so L^2 = L and f is a
// projector on the whole ambient space.
class IGNModel {
 public:
  IGNModel(MapPtr g, std::shared_ptr<BinaryDiagonalCore> core, IGNWeights weights = {});
  static IGNModel create(const IGNOptions& options, RngStream& rng);

  const MapPtr& g() const { return g_; }
  const std::shared_ptr<BinaryDiagonalCore>& core() const { return core_; }
  const IGNWeights& weights() const { return weights_; }
  std::size_t dim() const { return g_->dim(); }

  Linearizer linearizer() const { return Linearizer::shared(g_, core_); }
  Tensor project(const Tensor& x) const { return linearizer()(x); }
  // Number of unit diagonal entries.
  std::size_t rank() const;

  // Parameters named g.* and core.logits.
  ParameterList parameters() const;
  std::uint32_t checksum() const;

 private:
  MapPtr g_;
  std::shared_ptr<BinaryDiagonalCore> core_;
  IGNWeights weights_;
};

struct IGNLoss {
  Var total;
  Var rec;     // mean |f(x) - x|^2
  Var sparse;  // mean of the binarized diagonal, rank / n
  Var iso;     // mean | |g(x) - g(0)|^2 - |x|^2 |
};

// With an anchor the diagonal's forward value becomes round(P) + (P - anchor),
// which equals round(P) at P == anchor but is continuous in the logits; pass
// the current P to finite-difference the straight-through path.
IGNLoss ign_loss(const IGNModel& model, const Tensor& x, const std::optional<Tensor>& anchor = std::nullopt);

// Current P = sigmoid(logits), for use as an anchor.
Tensor ign_probabilities(const IGNModel& model);

struct IGNTrainOptions {
  std::size_t steps = 3000;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  // Probes from N(0, probe_std^2 I) for the idempotency residual; 0 disables.
  std::size_t probes = 1000;
  double probe_std = 3.0;
};

struct IGNMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double rec = 0.0;
  double sparse = 0.0;
  double iso = 0.0;
  std::size_t rank = 0;
  double g0_norm = 0.0;  // |g(0)|, tracks drift of the latent origin
  double idempotency = 0.0;
};

using IGNLogFn = std::function<void(const IGNMetrics&)>;

// Probes used by train_ign for a given seed.
Tensor ign_probes(const IGNTrainOptions& options, std::size_t dim);

// Rows of `data` must already live in the model dimension (see embed()).
// Step 0 is logged before any update.
std::vector<IGNMetrics> train_ign(IGNModel& model, const Tensor& data, const IGNTrainOptions& options,
                                  const IGNLogFn& on_log = {});

}  // namespace linearizer
