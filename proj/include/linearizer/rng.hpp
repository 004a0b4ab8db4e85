#pragma once

#include <cstdint>
#include <vector>

#include "linearizer/tensor.hpp"

namespace linearizer {

// Counter-based random stream. Every draw is a pure function of (seed, counter),
// so identical states give identical draws on every platform, independent of
// the standard library's distribution implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two counters per draw.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev = 1.0);
  Tensor uniform_tensor(std::size_t rows, std::size_t cols, double lo, double hi);

  // Independent stream keyed by `index`; does not advance this stream.
  RngStream substream(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace linearizer
