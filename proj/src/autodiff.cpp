#include "linearizer/autodiff.hpp"

#include <cmath>
#include <initializer_list>
#include <unordered_set>

#include "linearizer/errors.hpp"

namespace linearizer {

namespace {

thread_local bool t_grad_enabled = true;

// A finite sum implies finite entries; only a non-finite sum needs the exact scan.
bool finite_fast(const Tensor& t) {
  const Eigen::Map<const Eigen::ArrayXd> a(t.data().data(), static_cast<Eigen::Index>(t.size()));
  return std::isfinite(a.sum()) || t.all_finite();
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2 && t.rank() != 1) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + t.shape_string());
  }
}

Tensor zeros_like(const Tensor& t) { return Tensor::zeros(t.rows(), t.cols()); }

// Sums `g` down to rows x cols, undoing a broadcast.
Tensor reduce_to(const Tensor& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Tensor out = Tensor::zeros(rows, cols);
  const std::size_t gr = g.rows(), gc = g.cols();
  const double* src = g.data().data();
  double* dst = out.data().data();
  for (std::size_t r = 0; r < gr; ++r) {
    double* row = dst + (rows == 1 ? 0 : r * cols);
    if (cols == 1) {
      double s = 0.0;
      for (std::size_t c = 0; c < gc; ++c) s += src[r * gc + c];
      row[0] += s;
    } else {
      for (std::size_t c = 0; c < gc; ++c) row[c] += src[r * gc + c];
    }
  }
  return out;
}

std::size_t broadcast_dim(std::size_t a, std::size_t b, const char* op, const Tensor& ta, const Tensor& tb) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw DimensionError(std::string(op) + ": cannot broadcast " + ta.shape_string() + " with " + tb.shape_string());
}

template <typename F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, const char* op, F f) {
  const std::size_t rows = broadcast_dim(a.rows(), b.rows(), op, a, b);
  const std::size_t cols = broadcast_dim(a.cols(), b.cols(), op, a, b);
  Tensor out = Tensor::zeros(rows, cols);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  if (a.size() == out.size() && b.size() == out.size()) {
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  // Strides of zero repeat a broadcast row or column.
  const std::size_t a_rs = a.rows() == 1 ? 0 : a.cols(), a_cs = a.cols() == 1 ? 0 : 1;
  const std::size_t b_rs = b.rows() == 1 ? 0 : b.cols(), b_cs = b.cols() == 1 ? 0 : 1;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      po[r * cols + c] = f(pa[r * a_rs + c * a_cs], pb[r * b_rs + c * b_cs]);
    }
  }
  return out;
}

template <typename F, typename DF>
Var unary(const Var& a, const char* rule, F f, DF df) {
  Tensor out = a.value();
  for (double& v : out.data()) v = f(v);
  return make_op(rule, std::move(out), {a}, [df](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= df(in.value[i], self.value[i]);
    accumulate_grad(in, g);
  });
}

}  // namespace

void accumulate_grad(Node& n, const Tensor& g) {
  if (n.grad.empty()) {
    n.grad = g;
    if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), g.values());
    return;
  }
  if (n.grad.size() != g.size()) {
    throw DimensionError("gradient shape " + g.shape_string() + " does not match " + n.grad.shape_string());
  }
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() noexcept { return t_grad_enabled; }

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->rule = "constant";
  return Var(std::move(n));
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->rule = "parameter";
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_op(std::string rule, Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  if (!finite_fast(value)) throw NumericError("non-finite value produced by '" + rule + "'");
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->rule = std::move(rule);
  n->leaf = false;
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (!root.defined()) throw ContractError("backward on an undefined Var");
  if (root.value().size() != 1) {
    throw ContractError("backward needs a scalar root, got shape " + root.value().shape_string());
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; deep graphs (long sampling chains) would overflow recursion.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->leaf) n->grad = Tensor();
  }
  Node& r = *root.node();
  if (r.leaf) {
    accumulate_grad(r, Tensor(r.value.shape(), 1.0));
    return;
  }
  r.grad = Tensor(r.value.shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

void zero_grad(ParameterList& params) {
  for (auto& p : params) p.var.zero_grad();
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

double round_half_down(double p) { return std::ceil(p - 0.5); }

namespace ops {

Var matmul(const Var& a, const Var& b) {
  Tensor out = linearizer::matmul(a.value(), b.value());
  return make_op("matmul", std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      Tensor ga = zeros_like(na.value);
      ga.as_matrix().noalias() = self.grad.as_matrix() * nb.value.as_matrix().transpose();
      accumulate_grad(na, ga);
    }
    if (nb.requires_grad) {
      Tensor gb = zeros_like(nb.value);
      gb.as_matrix().noalias() = na.value.as_matrix().transpose() * self.grad.as_matrix();
      accumulate_grad(nb, gb);
    }
  });
}

Var transpose(const Var& a) {
  return make_op("transpose", linearizer::transpose(a.value()), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    if (in.requires_grad) accumulate_grad(in, linearizer::transpose(self.grad));
  });
}

Var add(const Var& a, const Var& b) {
  require_rank2(a.value(), "add");
  Tensor out = broadcast_apply(a.value(), b.value(), "add", [](double x, double y) { return x + y; });
  return make_op("add", std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) accumulate_grad(*p, reduce_to(self.grad, p->value.rows(), p->value.cols()));
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = broadcast_apply(a.value(), b.value(), "sub", [](double x, double y) { return x - y; });
  return make_op("sub", std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) accumulate_grad(na, reduce_to(self.grad, na.value.rows(), na.value.cols()));
    if (nb.requires_grad) {
      Tensor g = reduce_to(self.grad, nb.value.rows(), nb.value.cols());
      for (double& v : g.data()) v = -v;
      accumulate_grad(nb, g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = broadcast_apply(a.value(), b.value(), "mul", [](double x, double y) { return x * y; });
  return make_op("mul", std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      Tensor g = broadcast_apply(self.grad, nb.value, "mul", [](double x, double y) { return x * y; });
      accumulate_grad(na, reduce_to(g, na.value.rows(), na.value.cols()));
    }
    if (nb.requires_grad) {
      Tensor g = broadcast_apply(self.grad, na.value, "mul", [](double x, double y) { return x * y; });
      accumulate_grad(nb, reduce_to(g, nb.value.rows(), nb.value.cols()));
    }
  });
}

Var div(const Var& a, const Var& b) {
  Tensor out = broadcast_apply(a.value(), b.value(), "div", [](double x, double y) { return x / y; });
  return make_op("div", std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      Tensor g = broadcast_apply(self.grad, nb.value, "div", [](double x, double y) { return x / y; });
      accumulate_grad(na, reduce_to(g, na.value.rows(), na.value.cols()));
    }
    if (nb.requires_grad) {
      // d(a/b)/db = -(a/b)/b
      Tensor q = broadcast_apply(self.value, nb.value, "div", [](double x, double y) { return -x / y; });
      for (std::size_t i = 0; i < q.size(); ++i) q[i] *= self.grad[i];
      accumulate_grad(nb, reduce_to(q, nb.value.rows(), nb.value.cols()));
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp(const Var& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(const Var& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid",
      [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  // Vectorized through Eigen; the derivative (a sigmoid) is kept for the backward pass.
  const Tensor& in = a.value();
  Tensor out = zeros_like(in);
  Tensor slope = zeros_like(in);
  const auto n = static_cast<Eigen::Index>(in.size());
  const Eigen::Map<const Eigen::ArrayXd> x(in.data().data(), n);
  const Eigen::ArrayXd e = (-x.abs()).exp();
  const Eigen::ArrayXd inv = (1.0 + e).inverse();
  Eigen::Map<Eigen::ArrayXd>(out.data().data(), n) = x.max(0.0) + (1.0 + e).log();
  Eigen::Map<Eigen::ArrayXd>(slope.data().data(), n) = (x >= 0.0).select(inv, e * inv);
  return make_op("softplus", std::move(out), {a}, [slope = std::move(slope)](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= slope[i];
    accumulate_grad(in, g);
  });
}

Var sinh(const Var& a) {
  return unary(a, "sinh", [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

Var asinh(const Var& a) {
  return unary(
      a, "asinh", [](double x) { return std::asinh(x); },
      [](double x, double) { return 1.0 / std::sqrt(1.0 + x * x); });
}

Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

namespace {

// y^3 - c with about 106 bits of precision, via error-free products.
double cube_minus(double y, double c) {
  const double p = y * y;
  const double pe = std::fma(y, y, -p);
  const double h = p * y;
  const double he = std::fma(p, y, -h);
  return (h - c) + (he + pe * y);
}

// Correctly rounded in practice, so that cbrt(cube(x)) == x and cancellations in
// latent space come back as exact zeros.
double accurate_cube(double x) {
  const double p = x * x;
  const double pe = std::fma(x, x, -p);
  const double h = p * x;
  const double he = std::fma(p, x, -h);
  return h + (he + pe * x);
}

double accurate_cbrt(double c) {
  double y = std::cbrt(c);
  if (c == 0.0 || !std::isfinite(y)) return y;
  // libm cbrt can be a few ulps off; one Newton step on the exact residual, then
  // walk to the neighbour with the smallest residual.
  const double newton = y - cube_minus(y, c) / (3.0 * y * y);
  if (std::isfinite(newton)) y = newton;
  double err = std::abs(cube_minus(y, c));
  for (int step = 0; step < 4; ++step) {
    double best = y;
    for (double cand : {std::nextafter(y, -INFINITY), std::nextafter(y, INFINITY)}) {
      const double e = std::abs(cube_minus(cand, c));
      if (e < err) {
        err = e;
        best = cand;
      }
    }
    if (best == y) break;
    y = best;
  }
  return y;
}

}  // namespace

Var cube(const Var& a) {
  return unary(a, "cube", [](double x) { return accurate_cube(x); }, [](double x, double) { return 3.0 * x * x; });
}

Var cbrt(const Var& a) {
  // Derivative is singular at 0; callers that differentiate through cbrt stay away from it.
  return unary(a, "cbrt", [](double x) { return accurate_cbrt(x); }, [](double, double y) { return 1.0 / (3.0 * y * y); });
}

Var sqrt(const Var& a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var abs(const Var& a) {
  return unary(a, "abs", [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_op("sum", Tensor::scalar(s), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    if (in.requires_grad) accumulate_grad(in, Tensor(in.value.shape(), self.grad[0]));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a) {
  const Tensor& v = a.value();
  Tensor out = Tensor::zeros(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < v.cols(); ++c) s += v(r, c);
    out(r, 0) = s;
  }
  return make_op("row_sum", std::move(out), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor g = zeros_like(in.value);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = self.grad(r, 0);
    accumulate_grad(in, g);
  });
}

Var col_sum(const Var& a) {
  const Tensor& v = a.value();
  return make_op("col_sum", reduce_to(v, 1, v.cols()), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor g = zeros_like(in.value);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) = self.grad(0, c);
    accumulate_grad(in, g);
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
  const Tensor& v = a.value();
  if (begin + count > v.cols()) throw DimensionError("slice_cols out of range for " + v.shape_string());
  Tensor out = Tensor::zeros(v.rows(), count);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = v(r, begin + c);
  return make_op("slice_cols", std::move(out), {a}, [begin, count](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor g = zeros_like(in.value);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) g(r, begin + c) = self.grad(r, c);
    accumulate_grad(in, g);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols row mismatch");
    cols += p.cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) out(r, off + c) = p.value()(r, c);
    off += p.cols();
  }
  return make_op("concat_cols", std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t pc = p->value.cols();
      if (p->requires_grad) {
        Tensor g = zeros_like(p->value);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) g(r, c) = self.grad(r, off + c);
        accumulate_grad(*p, g);
      }
      off += pc;
    }
  });
}

Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) throw DimensionError("reshape changes element count");
  return make_op("reshape", Tensor({rows, cols}, a.value().values()), {a}, [](Node& self) {
    Node& in = *self.parents[0];
    if (in.requires_grad) accumulate_grad(in, Tensor(in.value.shape(), self.grad.values()));
  });
}

Var rowwise_matvec(const Var& mats, const Var& vecs, std::size_t m) {
  const Tensor& M = mats.value();
  const Tensor& z = vecs.value();
  const std::size_t batch = z.rows();
  const std::size_t k = z.cols();
  if (M.rows() != batch || M.cols() != m * k) {
    throw DimensionError("rowwise_matvec: matrices " + M.shape_string() + " do not fit vectors " + z.shape_string());
  }
  Tensor out = Tensor::zeros(batch, m);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += M(b, i * k + j) * z(b, j);
      out(b, i) = s;
    }
  }
  return make_op("rowwise_matvec", std::move(out), {mats, vecs}, [m, k, batch](Node& self) {
    Node& nm = *self.parents[0];
    Node& nz = *self.parents[1];
    if (nm.requires_grad) {
      Tensor g = zeros_like(nm.value);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) g(b, i * k + j) = self.grad(b, i) * nz.value(b, j);
      accumulate_grad(nm, g);
    }
    if (nz.requires_grad) {
      Tensor g = zeros_like(nz.value);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < k; ++j) g(b, j) += nm.value(b, i * k + j) * self.grad(b, i);
      accumulate_grad(nz, g);
    }
  });
}

Var ste_round(const Var& p, const std::optional<Tensor>& anchor) {
  const Tensor& v = p.value();
  if (anchor && anchor->size() != v.size()) throw DimensionError("ste_round anchor shape mismatch");
  Tensor out = v;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = anchor ? (*anchor)[i] : v[i];
    out[i] = round_half_down(v[i]) + (v[i] - a);
  }
  return make_op("ste_round", std::move(out), {p}, [](Node& self) {
    Node& in = *self.parents[0];
    if (in.requires_grad) accumulate_grad(in, self.grad);
  });
}

Var soft_clamp(const Var& x, double c) { return scale(tanh(scale(x, 1.0 / c)), c); }

}  // namespace ops

Var operator+(const Var& a, const Var& b) { return ops::add(a, b); }
Var operator-(const Var& a, const Var& b) { return ops::sub(a, b); }
Var operator*(const Var& a, const Var& b) { return ops::mul(a, b); }
Var operator-(const Var& a) { return ops::neg(a); }
Var operator*(double s, const Var& a) { return ops::scale(a, s); }
Var operator*(const Var& a, double s) { return ops::scale(a, s); }

}  // namespace linearizer
