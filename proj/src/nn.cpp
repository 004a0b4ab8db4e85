#include "linearizer/nn.hpp"

#include <cmath>

#include "linearizer/errors.hpp"

namespace linearizer {

Dense::Dense(std::size_t in, std::size_t out, RngStream& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  weight_ = parameter(rng.uniform_tensor(in, out, -limit, limit));
  bias_ = parameter(Tensor::zeros(1, out));
}

Var Dense::operator()(const Var& x) const {
  if (x.cols() != in_features()) {
    throw DimensionError("dense layer expects " + std::to_string(in_features()) + " inputs, got " +
                         std::to_string(x.cols()));
  }
  return ops::add(ops::matmul(x, weight_), bias_);
}

void Dense::collect_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

Mlp::Mlp(const std::vector<std::size_t>& widths, RngStream& rng, double output_gain) {
  if (widths.size() < 2) throw ContractError("an MLP needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers_.emplace_back(widths[i], widths[i + 1], rng, last ? output_gain : 1.0);
  }
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i + 1 < layers_.size()) h = ops::softplus(h);
  }
  return h;
}

void Mlp::collect_parameters(ParameterList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect_parameters(out, prefix + ".l" + std::to_string(i));
}

}  // namespace linearizer
