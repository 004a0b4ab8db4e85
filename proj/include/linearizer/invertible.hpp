#pragma once

// Exactly invertible maps g: R^n -> R^n acting on batches (rows are samples).
//
// Every map exposes a differentiable forward and inverse built from autodiff
// ops, so gradients flow through either direction. Parameterized maps hold
// their parameters as leaf Vars; they are immutable during evaluation and
// mutated only by an optimizer or a checkpoint load.

#include <memory>
#include <string>
#include <vector>

#include "linearizer/autodiff.hpp"
#include "linearizer/nn.hpp"
#include "linearizer/rng.hpp"

namespace linearizer {

enum class MapKind { AdditiveCoupling, AffineCoupling, ActNorm, HouseholderMixing, AnalyticBijection, Composition, Inverse };

std::string to_string(MapKind kind);

class InvertibleMap {
 public:
  virtual ~InvertibleMap() = default;

  virtual MapKind kind() const = 0;
  virtual std::size_t dim() const = 0;
  // x is B x dim().
  virtual Var forward(const Var& x) const = 0;
  virtual Var inverse(const Var& y) const = 0;
  virtual void collect_parameters(ParameterList& /*out*/, const std::string& /*prefix*/) const {}
  virtual std::string describe() const { return to_string(kind()); }

 protected:
  void check_dim(const Var& v, const char* where) const;
};

using MapPtr = std::shared_ptr<const InvertibleMap>;

// Gradient-free evaluation on plain tensors.
Tensor forward(const InvertibleMap& g, const Tensor& x);
Tensor inverse(const InvertibleMap& g, const Tensor& y);

ParameterList parameters_of(const InvertibleMap& g, const std::string& prefix = "g");

// y = x * exp(log_scale) + bias, per coordinate. Starts as the identity.
class ActNorm final : public InvertibleMap {
 public:
  explicit ActNorm(std::size_t n);

  MapKind kind() const override { return MapKind::ActNorm; }
  std::size_t dim() const override { return n_; }
  Var forward(const Var& x) const override;
  Var inverse(const Var& y) const override;
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

  Var& log_scale() { return log_scale_; }
  Var& bias() { return bias_; }

 private:
  std::size_t n_;
  Var log_scale_;
  Var bias_;
};

struct CouplingOptions {
  std::size_t width = 64;
  std::size_t hidden_layers = 2;
  // Affine couplings bound log-scale to (-clamp, clamp) with clamp * tanh(raw / clamp).
  double log_scale_clamp = 2.0;
  // Init gain of the conditioner's output layer; 0 makes the coupling start as the identity.
  double output_gain = 0.25;
};

// The first ceil(n/2) coordinates are the "head", the rest the "tail".
// With condition_on_head, the head passes through and conditions the tail;
// otherwise the tail conditions the head.
class AffineCoupling final : public InvertibleMap {
 public:
  AffineCoupling(std::size_t n, bool condition_on_head, const CouplingOptions& options, RngStream& rng);

  MapKind kind() const override { return MapKind::AffineCoupling; }
  std::size_t dim() const override { return n_; }
  Var forward(const Var& x) const override;
  Var inverse(const Var& y) const override;
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  struct Split {
    Var cond;
    Var moving;
  };
  Split split(const Var& x) const;
  Var merge(const Var& cond, const Var& moving) const;
  std::pair<Var, Var> shift_and_log_scale(const Var& cond) const;

  std::size_t n_;
  std::size_t head_;
  bool condition_on_head_;
  double clamp_;
  Mlp net_;
};

class AdditiveCoupling final : public InvertibleMap {
 public:
  AdditiveCoupling(std::size_t n, bool condition_on_head, const CouplingOptions& options, RngStream& rng);

  MapKind kind() const override { return MapKind::AdditiveCoupling; }
  std::size_t dim() const override { return n_; }
  Var forward(const Var& x) const override;
  Var inverse(const Var& y) const override;
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

 private:
  std::size_t n_;
  std::size_t head_;
  bool condition_on_head_;
  Mlp net_;
};

// Product of k Householder reflections H_i = I - 2 v_i v_i^T / |v_i|^2.
// Orthogonal, so the inverse is the transpose: reflections applied in reverse.
class HouseholderMixing final : public InvertibleMap {
 public:
  HouseholderMixing(std::size_t n, std::size_t reflections, RngStream& rng);

  MapKind kind() const override { return MapKind::HouseholderMixing; }
  std::size_t dim() const override { return n_; }
  Var forward(const Var& x) const override;
  Var inverse(const Var& y) const override;
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;

  // Matrix Q with forward(x) = x Q^T for row batches.
  Tensor matrix() const;

 private:
  Var reflect(const Var& x, std::size_t i) const;

  std::size_t n_;
  Var vectors_;  // reflections x n
};

// Parameter-free bijections with closed-form inverses.
class AnalyticBijection final : public InvertibleMap {
 public:
  enum class Form { Cube, ScaledSinh, Affine };

  // v -> v^3 elementwise.
  static std::shared_ptr<AnalyticBijection> cube(std::size_t n);
  // v -> scale * sinh(v) elementwise.
  static std::shared_ptr<AnalyticBijection> scaled_sinh(std::size_t n, double scale = 1.0);
  // v -> W v + b. Throws ContractError if W is singular.
  static std::shared_ptr<AnalyticBijection> affine(const Tensor& weight, const Tensor& bias);

  MapKind kind() const override { return MapKind::AnalyticBijection; }
  std::size_t dim() const override { return n_; }
  Var forward(const Var& x) const override;
  Var inverse(const Var& y) const override;
  std::string describe() const override;

  Form form() const noexcept { return form_; }

 private:
  AnalyticBijection(Form form, std::size_t n) : form_(form), n_(n) {}

  Form form_;
  std::size_t n_;
  double scale_ = 1.0;
  Tensor weight_t_;      // W^T
  Tensor inv_weight_t_;  // W^{-T}
  Tensor bias_;
};

// forward = maps.back() o ... o maps.front(); an empty list is the identity.
class Composition final : public InvertibleMap {
 public:
  Composition(std::size_t n, std::vector<MapPtr> maps);

  MapKind kind() const override { return MapKind::Composition; }
  std::size_t dim() const override { return n_; }
  Var forward(const Var& x) const override;
  Var inverse(const Var& y) const override;
  void collect_parameters(ParameterList& out, const std::string& prefix) const override;
  std::string describe() const override;

  const std::vector<MapPtr>& maps() const noexcept { return maps_; }

 private:
  std::size_t n_;
  std::vector<MapPtr> maps_;
};

// g^{-1} viewed as a map in its own right.
class InverseMap final : public InvertibleMap {
 public:
  explicit InverseMap(MapPtr inner);

  MapKind kind() const override { return MapKind::Inverse; }
  std::size_t dim() const override { return inner_->dim(); }
  Var forward(const Var& x) const override { return inner_->inverse(x); }
  Var inverse(const Var& y) const override { return inner_->forward(y); }
  void collect_parameters(ParameterList& out, const std::string& prefix) const override {
    inner_->collect_parameters(out, prefix);
  }

 private:
  MapPtr inner_;
};

MapPtr identity_map(std::size_t n);
// forward = g2 o g1, inverse = g1^{-1} o g2^{-1}. Throws DimensionError on mismatch.
MapPtr compose(MapPtr g1, MapPtr g2);
MapPtr inverted(MapPtr g);

enum class CouplingType { Affine, Additive };

struct StackOptions {
  std::size_t dim = 2;
  std::size_t blocks = 6;
  CouplingType coupling = CouplingType::Affine;
  CouplingOptions conditioner{};
  bool actnorm = true;
  bool mixing = true;
};

// Per block: ActNorm -> coupling(head | tail) -> coupling(tail | head) -> Householder mixing.
// Requires dim >= 2.
MapPtr make_coupling_stack(const StackOptions& options, RngStream& rng);

}  // namespace linearizer
