#include "linearizer/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "linearizer/errors.hpp"

namespace linearizer {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_relative_error);
  return w;
}

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.passed) out.push_back(e.name);
  }
  return out;
}

namespace {

double evaluate(const std::function<Var()>& fn) {
  NoGradGuard guard;
  const double v = fn().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var()>& fn, ParameterList params, GradCheckOptions options) {
  zero_grad(params);
  Var root = fn();
  if (root.value().size() != 1) throw ContractError("grad_check needs a scalar-valued function");
  if (!std::isfinite(root.item())) throw NumericError("grad_check: non-finite function value");
  backward(root);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (auto& p : params) {
    const Tensor analytic = p.var.has_grad() ? p.var.grad() : Tensor(p.var.value().shape(), 0.0);
    Tensor numeric(p.var.value().shape(), 0.0);
    Tensor& w = p.var.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + options.step;
      const double fp = evaluate(fn);
      w[i] = orig - options.step;
      const double fm = evaluate(fn);
      w[i] = orig;
      numeric[i] = (fp - fm) / (2.0 * options.step);
    }
    GradCheckEntry e;
    e.name = p.name;
    e.max_abs_error = max_abs_diff(analytic, numeric);
    const double scale = std::max({analytic.max_abs(), numeric.max_abs(), options.floor});
    e.max_relative_error = e.max_abs_error / scale;
    e.passed = std::isfinite(e.max_relative_error) && e.max_relative_error < options.tolerance;
    report.entries.push_back(std::move(e));
  }
  zero_grad(params);
  return report;
}

}  // namespace linearizer
