#include "linearizer/optim.hpp"

#include <cmath>

#include "linearizer/errors.hpp"

namespace linearizer {

Adam::Adam(ParameterList params, AdamOptions options) : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.value().shape(), 0.0);
    v_.emplace_back(p.var.value().shape(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& var = params_[i].var;
    if (!var.has_grad()) continue;
    const Tensor& g = var.grad();
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter '" + params_[i].name + "'");
    Tensor& w = var.mutable_value();
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = options_.beta1 * m[k] + (1.0 - options_.beta1) * g[k];
      v[k] = options_.beta2 * v[k] + (1.0 - options_.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= options_.lr * mhat / (std::sqrt(vhat) + options_.eps);
    }
  }
}

void Adam::zero_grad() { linearizer::zero_grad(params_); }

}  // namespace linearizer
