#pragma once

// Tape-style reverse-mode differentiation over Tensor values.
//
// A Var is a handle to a node in a graph that is rebuilt on every forward
// pass. Leaf parameters live as long as the model owning them; interior nodes
// live as long as some Var refers to them. backward() on a scalar root walks
// the graph in reverse topological order and accumulates gradients into every
// node that requires them.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "linearizer/tensor.hpp"

namespace linearizer {

struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient is accumulated
  std::vector<std::shared_ptr<Node>> parents;
  std::string rule;  // identifies the local gradient rule ("matmul", "tanh", ...)
  bool requires_grad = false;
  bool leaf = true;
  std::function<void(Node&)> backward;
};

// Adds g into n.grad, allocating it on first use. Shapes must agree.
void accumulate_grad(Node& n, const Tensor& g);

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  // Direct write access for optimizers and checkpoint loading.
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& rule() const { return node_->rule; }

  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  double item() const { return node_->value.item(); }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, newly created nodes record no parents or gradient rules.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

Var constant(Tensor value);
Var parameter(Tensor value);

// Registers a custom differentiable op. `backward` receives the node whose
// grad is populated and must accumulate into each parent that requires grad.
// Throws NumericError if `value` holds NaN or Inf.
Var make_op(std::string rule, Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Reverse accumulation from a scalar root. Interior gradients are reset on
// every call; leaf gradients accumulate until zero_grad().
void backward(const Var& root);

struct NamedParameter {
  std::string name;
  Var var;
};
using ParameterList = std::vector<NamedParameter>;

void zero_grad(ParameterList& params);
std::size_t parameter_count(const ParameterList& params);

namespace ops {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// Elementwise with 2-D broadcasting: each operand dimension equals the other or is 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var sinh(const Var& a);
Var asinh(const Var& a);
Var square(const Var& a);
Var cube(const Var& a);
Var cbrt(const Var& a);
Var sqrt(const Var& a);
Var abs(const Var& a);

// Sum of all entries as a 1x1 tensor.
Var sum(const Var& a);
Var mean(const Var& a);
// B x n -> B x 1.
Var row_sum(const Var& a);
// B x n -> 1 x n.
Var col_sum(const Var& a);

Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var reshape(const Var& a, std::size_t rows, std::size_t cols);

// Per-row matrix-vector product. Row b of `mats` holds an m x k matrix in
// row-major order; row b of `vecs` is a length-k vector. Returns B x m.
Var rowwise_matvec(const Var& mats, const Var& vecs, std::size_t m);

// Straight-through binarization: forward value round(p) + (p - anchor) with
// round-half-down, gradient passed to p unchanged. With no anchor the forward
// value is exactly round(p), entries in {0, 1} for p in [0, 1].
Var ste_round(const Var& p, const std::optional<Tensor>& anchor = std::nullopt);

// c * tanh(x / c): smooth clamp to (-c, c).
Var soft_clamp(const Var& x, double c);

}  // namespace ops

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);

double round_half_down(double p);

}  // namespace linearizer
