#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace linearizer {

struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Residuals of the algebraic identities on freshly initialized random models:
// induced axioms, superposition per core kind, composition, powers, transpose,
// SVD, Penrose equations, Euler/RK4 collapse and IGN idempotency.
std::vector<CheckResult> verify_suite(std::uint64_t seed, const std::function<void(const CheckResult&)>& on_check = {});

}  // namespace linearizer
