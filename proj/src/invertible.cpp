#include "linearizer/invertible.hpp"

#include <cmath>
#include <sstream>

#include "linearizer/errors.hpp"

namespace linearizer {

std::string to_string(MapKind kind) {
  switch (kind) {
    case MapKind::AdditiveCoupling: return "AdditiveCoupling";
    case MapKind::AffineCoupling: return "AffineCoupling";
    case MapKind::ActNorm: return "ActNorm";
    case MapKind::HouseholderMixing: return "HouseholderMixing";
    case MapKind::AnalyticBijection: return "AnalyticBijection";
    case MapKind::Composition: return "Composition";
    case MapKind::Inverse: return "Inverse";
  }
  return "Unknown";
}

void InvertibleMap::check_dim(const Var& v, const char* where) const {
  if (v.cols() != dim()) {
    throw DimensionError(std::string(where) + ": map of dimension " + std::to_string(dim()) + " applied to " +
                         v.value().shape_string());
  }
}

Tensor forward(const InvertibleMap& g, const Tensor& x) {
  NoGradGuard guard;
  return g.forward(constant(x)).value();
}

Tensor inverse(const InvertibleMap& g, const Tensor& y) {
  NoGradGuard guard;
  return g.inverse(constant(y)).value();
}

ParameterList parameters_of(const InvertibleMap& g, const std::string& prefix) {
  ParameterList out;
  g.collect_parameters(out, prefix);
  return out;
}

// ---------------------------------------------------------------- ActNorm

ActNorm::ActNorm(std::size_t n)
    : n_(n), log_scale_(parameter(Tensor::zeros(1, n))), bias_(parameter(Tensor::zeros(1, n))) {}

Var ActNorm::forward(const Var& x) const {
  check_dim(x, "ActNorm::forward");
  return x * ops::exp(log_scale_) + bias_;
}

Var ActNorm::inverse(const Var& y) const {
  check_dim(y, "ActNorm::inverse");
  return (y - bias_) * ops::exp(-log_scale_);
}

void ActNorm::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".log_scale", log_scale_});
  out.push_back({prefix + ".bias", bias_});
}

// ---------------------------------------------------------------- couplings

namespace {

std::size_t head_size(std::size_t n) { return (n + 1) / 2; }

std::vector<std::size_t> conditioner_widths(std::size_t in, std::size_t out, const CouplingOptions& o) {
  std::vector<std::size_t> widths{in};
  for (std::size_t i = 0; i < o.hidden_layers; ++i) widths.push_back(o.width);
  widths.push_back(out);
  return widths;
}

void require_coupling_dim(std::size_t n) {
  if (n < 2) throw DimensionError("coupling layers need dimension >= 2");
}

}  // namespace

AffineCoupling::AffineCoupling(std::size_t n, bool condition_on_head, const CouplingOptions& options, RngStream& rng)
    : n_((require_coupling_dim(n), n)),
      head_(head_size(n)),
      condition_on_head_(condition_on_head),
      clamp_(options.log_scale_clamp),
      net_(conditioner_widths(condition_on_head ? head_size(n) : n - head_size(n),
                              2 * (condition_on_head ? n - head_size(n) : head_size(n)), options),
           rng, options.output_gain) {}

AffineCoupling::Split AffineCoupling::split(const Var& x) const {
  Var head = ops::slice_cols(x, 0, head_);
  Var tail = ops::slice_cols(x, head_, n_ - head_);
  return condition_on_head_ ? Split{head, tail} : Split{tail, head};
}

Var AffineCoupling::merge(const Var& cond, const Var& moving) const {
  return condition_on_head_ ? ops::concat_cols({cond, moving}) : ops::concat_cols({moving, cond});
}

std::pair<Var, Var> AffineCoupling::shift_and_log_scale(const Var& cond) const {
  Var h = net_(cond);
  const std::size_t m = h.cols() / 2;
  Var shift = ops::slice_cols(h, 0, m);
  Var log_scale = ops::soft_clamp(ops::slice_cols(h, m, m), clamp_);
  return {shift, log_scale};
}

Var AffineCoupling::forward(const Var& x) const {
  check_dim(x, "AffineCoupling::forward");
  auto [cond, moving] = split(x);
  auto [shift, log_scale] = shift_and_log_scale(cond);
  return merge(cond, moving * ops::exp(log_scale) + shift);
}

Var AffineCoupling::inverse(const Var& y) const {
  check_dim(y, "AffineCoupling::inverse");
  auto [cond, moving] = split(y);
  auto [shift, log_scale] = shift_and_log_scale(cond);
  return merge(cond, (moving - shift) * ops::exp(-log_scale));
}

void AffineCoupling::collect_parameters(ParameterList& out, const std::string& prefix) const {
  net_.collect_parameters(out, prefix + ".net");
}

AdditiveCoupling::AdditiveCoupling(std::size_t n, bool condition_on_head, const CouplingOptions& options,
                                   RngStream& rng)
    : n_((require_coupling_dim(n), n)),
      head_(head_size(n)),
      condition_on_head_(condition_on_head),
      net_(conditioner_widths(condition_on_head ? head_size(n) : n - head_size(n),
                              condition_on_head ? n - head_size(n) : head_size(n), options),
           rng, options.output_gain) {}

Var AdditiveCoupling::forward(const Var& x) const {
  check_dim(x, "AdditiveCoupling::forward");
  Var head = ops::slice_cols(x, 0, head_);
  Var tail = ops::slice_cols(x, head_, n_ - head_);
  if (condition_on_head_) return ops::concat_cols({head, tail + net_(head)});
  return ops::concat_cols({head + net_(tail), tail});
}

Var AdditiveCoupling::inverse(const Var& y) const {
  check_dim(y, "AdditiveCoupling::inverse");
  Var head = ops::slice_cols(y, 0, head_);
  Var tail = ops::slice_cols(y, head_, n_ - head_);
  if (condition_on_head_) return ops::concat_cols({head, tail - net_(head)});
  return ops::concat_cols({head - net_(tail), tail});
}

void AdditiveCoupling::collect_parameters(ParameterList& out, const std::string& prefix) const {
  net_.collect_parameters(out, prefix + ".net");
}

// ---------------------------------------------------------------- Householder

HouseholderMixing::HouseholderMixing(std::size_t n, std::size_t reflections, RngStream& rng) : n_(n) {
  if (reflections == 0) throw ContractError("HouseholderMixing needs at least one reflection");
  Tensor v = rng.normal_tensor(reflections, n);
  // A zero vector has no reflection; nudge degenerate draws.
  for (std::size_t r = 0; r < reflections; ++r) {
    if (v.row_at(r).frobenius() < 1e-6) v(r, 0) = 1.0;
  }
  vectors_ = parameter(std::move(v));
}

Var HouseholderMixing::reflect(const Var& x, std::size_t i) const {
  Var v = ops::slice_cols(ops::reshape(vectors_, 1, vectors_.value().size()), i * n_, n_);
  Var unit = ops::div(v, ops::sqrt(ops::sum(ops::square(v))));
  Var proj = ops::matmul(x, ops::transpose(unit));  // B x 1
  return x - 2.0 * (proj * unit);
}

Var HouseholderMixing::forward(const Var& x) const {
  check_dim(x, "HouseholderMixing::forward");
  Var h = x;
  for (std::size_t i = 0; i < vectors_.rows(); ++i) h = reflect(h, i);
  return h;
}

Var HouseholderMixing::inverse(const Var& y) const {
  check_dim(y, "HouseholderMixing::inverse");
  Var h = y;
  for (std::size_t i = vectors_.rows(); i-- > 0;) h = reflect(h, i);
  return h;
}

void HouseholderMixing::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".vectors", vectors_});
}

Tensor HouseholderMixing::matrix() const { return transpose(linearizer::forward(*this, Tensor::identity(n_))); }

// ---------------------------------------------------------------- analytic

std::shared_ptr<AnalyticBijection> AnalyticBijection::cube(std::size_t n) {
  return std::shared_ptr<AnalyticBijection>(new AnalyticBijection(Form::Cube, n));
}

std::shared_ptr<AnalyticBijection> AnalyticBijection::scaled_sinh(std::size_t n, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ContractError("scaled_sinh needs a positive finite scale");
  auto g = std::shared_ptr<AnalyticBijection>(new AnalyticBijection(Form::ScaledSinh, n));
  g->scale_ = scale;
  return g;
}

std::shared_ptr<AnalyticBijection> AnalyticBijection::affine(const Tensor& weight, const Tensor& bias) {
  const std::size_t n = weight.rows();
  if (weight.cols() != n || bias.size() != n) throw DimensionError("affine bijection needs square W and matching b");
  Eigen::FullPivLU<RowMatrix> lu(weight.as_matrix());
  if (!lu.isInvertible()) throw ContractError("affine bijection weight is singular");
  auto g = std::shared_ptr<AnalyticBijection>(new AnalyticBijection(Form::Affine, n));
  g->weight_t_ = transpose(weight);
  g->inv_weight_t_ = Tensor::from_eigen(lu.inverse().transpose());
  g->bias_ = Tensor({1, n}, bias.values());
  return g;
}

Var AnalyticBijection::forward(const Var& x) const {
  check_dim(x, "AnalyticBijection::forward");
  switch (form_) {
    case Form::Cube: return ops::cube(x);
    case Form::ScaledSinh: return ops::scale(ops::sinh(x), scale_);
    case Form::Affine: return ops::matmul(x, constant(weight_t_)) + constant(bias_);
  }
  throw ContractError("unknown analytic form");
}

Var AnalyticBijection::inverse(const Var& y) const {
  check_dim(y, "AnalyticBijection::inverse");
  switch (form_) {
    case Form::Cube: return ops::cbrt(y);
    case Form::ScaledSinh: return ops::asinh(ops::scale(y, 1.0 / scale_));
    case Form::Affine: return ops::matmul(y - constant(bias_), constant(inv_weight_t_));
  }
  throw ContractError("unknown analytic form");
}

std::string AnalyticBijection::describe() const {
  switch (form_) {
    case Form::Cube: return "cube";
    case Form::ScaledSinh: return "scaled-sinh";
    case Form::Affine: return "affine";
  }
  return "analytic";
}

// ---------------------------------------------------------------- composition

Composition::Composition(std::size_t n, std::vector<MapPtr> maps) : n_(n), maps_(std::move(maps)) {
  for (const auto& m : maps_) {
    if (!m) throw ContractError("null map in composition");
    if (m->dim() != n_) {
      throw DimensionError("composition of dimension " + std::to_string(n_) + " given a map of dimension " +
                           std::to_string(m->dim()));
    }
  }
}

Var Composition::forward(const Var& x) const {
  check_dim(x, "Composition::forward");
  Var h = x;
  for (const auto& m : maps_) h = m->forward(h);
  return h;
}

Var Composition::inverse(const Var& y) const {
  check_dim(y, "Composition::inverse");
  Var h = y;
  for (auto it = maps_.rbegin(); it != maps_.rend(); ++it) h = (*it)->inverse(h);
  return h;
}

void Composition::collect_parameters(ParameterList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < maps_.size(); ++i) maps_[i]->collect_parameters(out, prefix + "." + std::to_string(i));
}

std::string Composition::describe() const {
  if (maps_.empty()) return "identity";
  std::ostringstream os;
  os << "Composition(";
  for (std::size_t i = 0; i < maps_.size(); ++i) os << (i ? ", " : "") << maps_[i]->describe();
  os << ')';
  return os.str();
}

InverseMap::InverseMap(MapPtr inner) : inner_(std::move(inner)) {
  if (!inner_) throw ContractError("InverseMap of a null map");
}

MapPtr identity_map(std::size_t n) { return std::make_shared<Composition>(n, std::vector<MapPtr>{}); }

MapPtr compose(MapPtr g1, MapPtr g2) {
  if (!g1 || !g2) throw ContractError("compose of a null map");
  if (g1->dim() != g2->dim()) {
    throw DimensionError("compose: dimensions " + std::to_string(g1->dim()) + " and " + std::to_string(g2->dim()));
  }
  const std::size_t n = g1->dim();
  return std::make_shared<Composition>(n, std::vector<MapPtr>{std::move(g1), std::move(g2)});
}

MapPtr inverted(MapPtr g) { return std::make_shared<InverseMap>(std::move(g)); }

MapPtr make_coupling_stack(const StackOptions& options, RngStream& rng) {
  require_coupling_dim(options.dim);
  const std::size_t n = options.dim;
  std::vector<MapPtr> blocks;
  for (std::size_t b = 0; b < options.blocks; ++b) {
    std::vector<MapPtr> parts;
    if (options.actnorm) parts.push_back(std::make_shared<ActNorm>(n));
    for (bool on_head : {true, false}) {
      if (options.coupling == CouplingType::Affine) {
        parts.push_back(std::make_shared<AffineCoupling>(n, on_head, options.conditioner, rng));
      } else {
        parts.push_back(std::make_shared<AdditiveCoupling>(n, on_head, options.conditioner, rng));
      }
    }
    if (options.mixing) parts.push_back(std::make_shared<HouseholderMixing>(n, n, rng));
    blocks.push_back(std::make_shared<Composition>(n, std::move(parts)));
  }
  return std::make_shared<Composition>(n, std::move(blocks));
}

}  // namespace linearizer
