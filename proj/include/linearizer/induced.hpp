#pragma once

// Vector-space structure transported through a bijection g:
//   u (+) v = g^-1(g(u) + g(v)),  a (.) v = g^-1(a g(v)),  <u, v>_g = <g(u), g(v)>.
// All operations act row-wise on batches (B x n).

#include <array>
#include <span>
#include <string>
#include <vector>

#include "linearizer/invertible.hpp"

namespace linearizer {

class InducedSpace {
 public:
  explicit InducedSpace(MapPtr g);

  std::size_t dim() const { return g_->dim(); }
  const MapPtr& map() const { return g_; }

  // g^-1(0) as a 1 x n row.
  Tensor zero_vector() const;

  Tensor oplus(const Tensor& u, const Tensor& v) const;
  Tensor odot(double a, const Tensor& v) const;
  // One scalar per row of v.
  Tensor odot(std::span<const double> a, const Tensor& v) const;
  Tensor ominus(const Tensor& u, const Tensor& v) const;

  // Per-row induced inner product and norm.
  std::vector<double> inner(const Tensor& u, const Tensor& v) const;
  std::vector<double> norm(const Tensor& v) const;

  // Size of u (-) v observed on the data side: max over rows of
  // |(u (-) v) - zero_vector()|_2. Zero iff u == v in exact arithmetic.
  double residual(const Tensor& u, const Tensor& v) const;

 private:
  MapPtr g_;
};

// Row-wise Euclidean dot products of two equally shaped batches.
std::vector<double> row_dot(const Tensor& a, const Tensor& b);
// max over rows of |a_r - b_r|_2.
double max_row_distance(const Tensor& a, const Tensor& b);

// Standard normal rows, each rescaled onto the ball of the given radius when it falls outside.
Tensor sample_ball(RngStream& rng, std::size_t count, std::size_t n, double radius);

struct AxiomResidual {
  std::string name;
  double residual = 0.0;
  bool passed = false;
};

struct AxiomReport {
  std::array<AxiomResidual, 9> axioms;
  double tolerance = 0.0;
  std::size_t trials = 0;

  bool passed() const;
  double worst() const;
};

struct AxiomOptions {
  std::size_t trials = 1000;
  double tolerance = 1e-6;
  double radius = 3.0;
  double scalar_range = 2.0;  // scalars drawn uniformly from [-range, range]
};

// Evaluates the nine vector-space axioms on random vectors and scalars:
// closure, associativity, commutativity, identity, inverse, scalar
// compatibility, scalar identity, distributivity over vectors and over
// scalars. Non-finite residuals are reported as failures, never thrown.
AxiomReport axiom_suite(const InducedSpace& space, RngStream& rng, const AxiomOptions& options = {});

}  // namespace linearizer
