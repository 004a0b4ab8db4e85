#pragma once

#include <string>
#include <vector>

#include "linearizer/autodiff.hpp"
#include "linearizer/rng.hpp"

namespace linearizer {

// y = x W + b for a batch x (B x in).
class Dense {
 public:
  // Weights uniform in +-gain*sqrt(6/(in+out)); bias zero.
  Dense(std::size_t in, std::size_t out, RngStream& rng, double gain = 1.0);

  Var operator()(const Var& x) const;

  std::size_t in_features() const { return weight_.rows(); }
  std::size_t out_features() const { return weight_.cols(); }

  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  Var weight_;
  Var bias_;
};

// Dense stack with softplus between layers and a linear output layer.
class Mlp {
 public:
  // `widths` = {in, hidden..., out}. The last layer's init is scaled by `output_gain`.
  Mlp(const std::vector<std::size_t>& widths, RngStream& rng, double output_gain = 1.0);

  Var operator()(const Var& x) const;

  std::size_t in_features() const { return layers_.front().in_features(); }
  std::size_t out_features() const { return layers_.back().out_features(); }

  void collect_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  std::vector<Dense> layers_;
};

}  // namespace linearizer
