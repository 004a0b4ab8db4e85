#pragma once

#include <cstdint>
#include <vector>

#include "linearizer/autodiff.hpp"

namespace linearizer {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain Adam with bias correction. Parameters without a gradient are skipped.
class Adam {
 public:
  explicit Adam(ParameterList params, AdamOptions options = {});

  void step();
  void zero_grad();

  std::uint64_t steps_taken() const noexcept { return t_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  ParameterList params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace linearizer
