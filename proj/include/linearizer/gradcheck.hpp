#pragma once

#include <functional>
#include <string>
#include <vector>

#include "linearizer/autodiff.hpp"

namespace linearizer {

struct GradCheckEntry {
  std::string name;
  // max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, floor)
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double worst() const;
  std::vector<std::string> failing() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Normalizer floor so all-zero gradients compare absolutely.
  double floor = 1e-8;
};

// Compares reverse-mode gradients of the scalar `fn` against central
// differences for every coordinate of every parameter. `fn` is called once
// for the analytic pass and twice per coordinate; it must rebuild its graph
// each call. Throws NumericError if any evaluation is non-finite.
GradCheckReport grad_check(const std::function<Var()>& fn, ParameterList params, GradCheckOptions options = {});

}  // namespace linearizer
