#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "linearizer/core.hpp"
#include "linearizer/invertible.hpp"
#include "linearizer/linearizer.hpp"

namespace linearizer {

// A time-dependent latent operator t -> A_t.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual std::size_t dim() const = 0;
  virtual Tensor matrix_at(double t) const = 0;
  // Row b of z is multiplied by A_{t_b}.
  virtual Var apply(const Var& z, std::span<const double> t) const = 0;
  virtual void collect_parameters(ParameterList& out, const std::string& prefix) const;
};

using FieldPtr = std::shared_ptr<const VelocityField>;

class HyperField final : public VelocityField {
 public:
  explicit HyperField(std::shared_ptr<const HyperCore> core);
  std::size_t dim() const override { return core_->rows(); }
  Tensor matrix_at(double t) const override { return core_->materialize_at(t); }
  Var apply(const Var& z, std::span<const double> t) const override { return core_->apply_batch(z, t); }
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;
  const std::shared_ptr<const HyperCore>& core() const { return core_; }

 private:
  std::shared_ptr<const HyperCore> core_;
};

// Fixed (non-trainable) schedule, used for analytic cases.
class ScheduleField final : public VelocityField {
 public:
  ScheduleField(std::size_t n, std::function<Tensor(double)> schedule);
  static std::shared_ptr<ScheduleField> constant(Tensor a);
  std::size_t dim() const override { return n_; }
  Tensor matrix_at(double t) const override;
  Var apply(const Var& z, std::span<const double> t) const override;

 private:
  std::size_t n_;
  std::function<Tensor(double)> schedule_;
};

struct FlowOptions {
  std::size_t dim = 2;
  std::size_t blocks = 6;
  std::size_t rank = 16;  // clamped to dim
  CouplingOptions conditioner{};
  HyperOptions hyper{};
};

// f(x, t) = g^-1(A_t g(x)) with one time-independent g on both sides.
class FlowModel {
 public:
  FlowModel(MapPtr g, FieldPtr field);
  static FlowModel create(const FlowOptions& options, RngStream& rng);

  const MapPtr& g() const { return g_; }
  const FieldPtr& field() const { return field_; }
  std::size_t dim() const { return g_->dim(); }
  InducedSpace space() const { return InducedSpace(g_); }

  // Parameters named g.* for the map and A.* for the field.
  ParameterList parameters() const;
  std::uint32_t checksum() const;

  Tensor velocity(const Tensor& x, double t) const;

 private:
  MapPtr g_;
  FieldPtr field_;
};

Tensor forward_interpolate(const FlowModel& model, const Tensor& x0, const Tensor& x1, double t);
Tensor target_velocity(const FlowModel& model, const Tensor& x0, const Tensor& x1);

struct FlowBatch {
  Tensor x0;  // prior draws
  Tensor x1;  // data
  std::vector<double> t;
};

// x0 ~ N(0, I), x1 drawn with replacement from `data`, t ~ U[0, 1].
FlowBatch draw_flow_batch(const Tensor& data, std::size_t size, RngStream& rng);

enum class LossSpace { Latent, Data };

struct FlowLossOptions {
  LossSpace space = LossSpace::Latent;
  // Weight of |(I + A_0) g(x0) - g(x1)|^2.
  double alignment_weight = 1.0;
};

struct FlowLoss {
  Var total;
  Var fm;
  Var alignment;
};

FlowLoss fm_loss(const FlowModel& model, const FlowBatch& batch, const FlowLossOptions& options = {});

// Pure flow-matching term without gradient tracking.
double evaluate_fm(const FlowModel& model, const FlowBatch& batch, LossSpace space = LossSpace::Latent);

enum class StepPath { Latent, Data };
enum class Scheme { Euler, Rk4 };

std::string to_string(Scheme scheme);
Scheme parse_scheme(const std::string& name);

// N induced-space Euler steps from x0. If `trajectory` is given it receives the N + 1 states.
Tensor euler_sample(const FlowModel& model, const Tensor& x0, std::size_t steps, StepPath path = StepPath::Latent,
                    std::vector<Tensor>* trajectory = nullptr);
// Step-by-step classical RK4 in latent space.
Tensor rk4_sample(const FlowModel& model, const Tensor& x0, std::size_t steps,
                  std::vector<Tensor>* trajectory = nullptr);
Tensor sample(const FlowModel& model, const Tensor& x0, std::size_t steps, Scheme scheme,
              std::vector<Tensor>* trajectory = nullptr);

Tensor euler_step_matrix(const VelocityField& field, double t, double dt);
Tensor rk4_step_matrix(const VelocityField& field, double t, double dt);
// Ordered product M_{N-1} ... M_0.
Tensor collapse_matrix(const VelocityField& field, std::size_t steps, Scheme scheme);

struct CollapsedOperator {
  Tensor b;
  Scheme scheme = Scheme::Euler;
  std::size_t steps = 0;
  std::uint32_t model_checksum = 0;
};

CollapsedOperator collapse(const FlowModel& model, std::size_t steps, Scheme scheme);

Tensor one_step_sample(const FlowModel& model, const Tensor& b, const Tensor& x0);
// The Linearizer (g, g, B).
Linearizer collapsed_linearizer(const FlowModel& model, const Tensor& b);
Tensor encode(const FlowModel& model, const Tensor& b, const Tensor& x);

enum class Blend { Induced, Euclidean };

Tensor latent_interpolate(const FlowModel& model, const Tensor& b, const Tensor& x1, const Tensor& x2, double a,
                          Blend blend = Blend::Induced);

struct SampleStats {
  Tensor mean;        // {1, n}
  Tensor covariance;  // {n, n}, unbiased
};

SampleStats sample_statistics(const Tensor& x);

// |a - b|_F / |b|_F, with a floor on the denominator.
double relative_difference(const Tensor& a, const Tensor& b);

struct FlowTrainOptions {
  std::size_t steps = 20000;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t log_every = 1000;
  std::size_t eval_size = 1024;
  FlowLossOptions loss{};
};

struct FlowMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double fm = 0.0;
  double alignment = 0.0;
  double eval_fm = 0.0;  // on the fixed evaluation batch
};

struct FlowTrainResult {
  double initial_eval_fm = 0.0;
  double final_eval_fm = 0.0;
  std::vector<FlowMetrics> log;
};

using FlowLogFn = std::function<void(const FlowMetrics&)>;

// Deterministic for a fixed seed: batch `s` is drawn from substream s of the seed.
FlowTrainResult train_flow(FlowModel& model, const Tensor& data, const FlowTrainOptions& options,
                           const FlowLogFn& on_log = {});

// The fixed evaluation batch used by train_flow.
FlowBatch flow_eval_batch(const Tensor& data, const FlowTrainOptions& options);

}  // namespace linearizer
