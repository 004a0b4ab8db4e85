#include "linearizer/rng.hpp"

#include <cmath>
#include <numbers>

namespace linearizer {

namespace {

// SplitMix64 finalizer; a bijective avalanche mix of a 64-bit word.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  const std::uint64_t out = mix64(mix64(seed_) ^ counter_);
  ++counter_;
  return out;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
  std::uint64_t v = 0;
  do {
    v = next_u64();
  } while (v >= limit);
  return v % n;
}

Tensor RngStream::normal_tensor(std::size_t rows, std::size_t cols, double stddev) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = stddev * normal();
  return t;
}

Tensor RngStream::uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = uniform(lo, hi);
  return t;
}

RngStream RngStream::substream(std::uint64_t index) const {
  return RngStream(mix64(seed_ ^ mix64(index + 0x5851F42D4C957F2Dull)), 0);
}

}  // namespace linearizer
