#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// Every operation records its parents and a backward closure on a heap node.
// Calling backward() on a result walks the recorded graph in reverse
// topological order and accumulates gradients into every node that
// requires them. Leaves created with parameter() accumulate across graphs
// until zero_grad() is called.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gtppo/errors.hpp"

namespace gtppo::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Node {
  Matrix value;
  Matrix grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

namespace detail {
inline thread_local int no_grad_depth = 0;
}

/// While alive, newly created operations on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  /// Gradient accumulated so far; zeros if nothing was accumulated.
  Matrix grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  void zero_grad() { node_->grad.resize(0, 0); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

inline Var parameter(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

inline Var scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

namespace detail {

inline Var make_result(Matrix value, std::initializer_list<const Var*> parents,
                       std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const Var* p : parents) {
      if (p->requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const Var* p : parents) n->parents.push_back(p->node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

inline Var make_result(Matrix value, std::span<const Var> parents,
                       std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const Var& p : parents) {
      if (p.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (const Var& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

inline void push(Node& self, std::size_t i, const Matrix& g) {
  auto& p = self.parents[i];
  if (p->requires_grad) p->accumulate(g);
}

inline bool wants(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace detail

/// Reverse pass from `root`, seeded with `seed` (ones when omitted).
inline void backward(const Var& root, const Matrix* seed = nullptr) {
  if (!root.requires_grad()) return;
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node& r = *root.node();
  r.accumulate(seed ? *seed : Matrix::Ones(r.value.rows(), r.value.cols()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear algebra.

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  return detail::make_result(a.value() * b.value(), {&a, &b}, [](Node& s) {
    const Matrix& A = s.parents[0]->value;
    const Matrix& B = s.parents[1]->value;
    if (detail::wants(s, 0)) detail::push(s, 0, s.grad * B.transpose());
    if (detail::wants(s, 1)) detail::push(s, 1, A.transpose() * s.grad);
  });
}

/// x W^T + 1 b, with W stored out x in and b a 1 x out row.
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.cols()) {
    throw ShapeError("linear: input has " + std::to_string(x.cols()) + " columns, weight expects " +
                     std::to_string(weight.cols()));
  }
  Matrix out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  return detail::make_result(std::move(out), {&x, &weight, &bias}, [](Node& s) {
    const Matrix& X = s.parents[0]->value;
    const Matrix& W = s.parents[1]->value;
    if (detail::wants(s, 0)) detail::push(s, 0, s.grad * W);
    if (detail::wants(s, 1)) detail::push(s, 1, s.grad.transpose() * X);
    if (detail::wants(s, 2)) detail::push(s, 2, s.grad.colwise().sum());
  });
}

inline Var add(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "add");
  return detail::make_result(a.value() + b.value(), {&a, &b}, [](Node& s) {
    detail::push(s, 0, s.grad);
    detail::push(s, 1, s.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "sub");
  return detail::make_result(a.value() - b.value(), {&a, &b}, [](Node& s) {
    detail::push(s, 0, s.grad);
    if (detail::wants(s, 1)) detail::push(s, 1, -s.grad);
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::check_same_shape(a, b, "mul");
  return detail::make_result(a.value().cwiseProduct(b.value()), {&a, &b}, [](Node& s) {
    if (detail::wants(s, 0)) detail::push(s, 0, s.grad.cwiseProduct(s.parents[1]->value));
    if (detail::wants(s, 1)) detail::push(s, 1, s.grad.cwiseProduct(s.parents[0]->value));
  });
}

inline Var scale(const Var& a, double k) {
  return detail::make_result(a.value() * k, {&a},
                             [k](Node& s) { detail::push(s, 0, s.grad * k); });
}

/// Broadcasts a 1 x m row over every row of `a`.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bad row shape");
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return detail::make_result(std::move(out), {&a, &row}, [](Node& s) {
    detail::push(s, 0, s.grad);
    if (detail::wants(s, 1)) detail::push(s, 1, s.grad.colwise().sum());
  });
}

/// Scales row i of `a` by col(i).
inline Var mul_col(const Var& a, const Var& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw ShapeError("mul_col: bad column shape");
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return detail::make_result(std::move(out), {&a, &col}, [](Node& s) {
    const Matrix& A = s.parents[0]->value;
    const Matrix& c = s.parents[1]->value;
    if (detail::wants(s, 0)) detail::push(s, 0, c.col(0).asDiagonal() * s.grad);
    if (detail::wants(s, 1)) detail::push(s, 1, s.grad.cwiseProduct(A).rowwise().sum());
  });
}

/// w * x + b with scalar (1 x 1) w and b.
inline Var scalar_affine(const Var& x, const Var& w, const Var& b) {
  Matrix out = (x.value() * w.scalar()).array() + b.scalar();
  return detail::make_result(std::move(out), {&x, &w, &b}, [](Node& s) {
    const double wv = s.parents[1]->value(0, 0);
    if (detail::wants(s, 0)) detail::push(s, 0, s.grad * wv);
    if (detail::wants(s, 1)) {
      detail::push(s, 1, Matrix::Constant(1, 1, s.grad.cwiseProduct(s.parents[0]->value).sum()));
    }
    if (detail::wants(s, 2)) detail::push(s, 2, Matrix::Constant(1, 1, s.grad.sum()));
  });
}

inline Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return detail::make_result(std::move(out), {&a}, [](Node& s) {
    const Matrix& y = s.value;
    detail::push(s, 0, s.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

inline Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return detail::make_result(std::move(out), {&a}, [](Node& s) {
    const Matrix& y = s.value;
    detail::push(s, 0, s.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

inline Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  return detail::make_result(std::move(out), {&a},
                             [](Node& s) { detail::push(s, 0, s.grad.cwiseProduct(s.value)); });
}

inline Var square(const Var& a) {
  return detail::make_result(a.value().array().square().matrix(), {&a}, [](Node& s) {
    detail::push(s, 0, 2.0 * s.grad.cwiseProduct(s.parents[0]->value));
  });
}

inline Var leaky_relu(const Var& a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return detail::make_result(std::move(out), {&a}, [slope](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix d = x.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; });
    detail::push(s, 0, s.grad.cwiseProduct(d));
  });
}

// ---------------------------------------------------------------------------
// Reductions.

inline Var sum(const Var& a) {
  return detail::make_result(Matrix::Constant(1, 1, a.value().sum()), {&a}, [](Node& s) {
    const Matrix& x = s.parents[0]->value;
    detail::push(s, 0, Matrix::Constant(x.rows(), x.cols(), s.grad(0, 0)));
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Euclidean norm of every row; the gradient at a zero row is taken as zero.
inline Var row_norms(const Var& a) {
  Matrix out = a.value().rowwise().norm();
  return detail::make_result(std::move(out), {&a}, [](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const double n = s.value(i, 0);
      if (n > 0.0) g.row(i) = x.row(i) * (s.grad(i, 0) / n);
    }
    detail::push(s, 0, g);
  });
}

/// Row-wise softmax. Entries with mask == false get exactly zero weight.
inline Var softmax_rows(const Var& a, const BoolMatrix* mask = nullptr) {
  const Matrix& x = a.value();
  if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols())) {
    throw ShapeError("softmax_rows: mask shape mismatch");
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) mx = std::max(mx, x(i, j));
    }
    if (!std::isfinite(mx)) throw NumericError("softmax_rows: row " + std::to_string(i) + " is empty");
    double total = 0.0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (!mask || (*mask)(i, j)) {
        out(i, j) = std::exp(x(i, j) - mx);
        total += out(i, j);
      }
    }
    out.row(i) /= total;
  }
  return detail::make_result(std::move(out), {&a}, [](Node& s) {
    const Matrix& y = s.value;
    Matrix dot = s.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.cwiseProduct(s.grad - dot.replicate(1, y.cols()));
    detail::push(s, 0, g);
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation.

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return detail::make_result(std::move(out), parts, [](Node& s) {
    Index off = 0;
    for (std::size_t i = 0; i < s.parents.size(); ++i) {
      const Index c = s.parents[i]->value.cols();
      if (s.parents[i]->requires_grad) s.parents[i]->accumulate(s.grad.middleCols(off, c));
      off += c;
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  std::vector<Var> v(parts);
  return concat_cols(std::span<const Var>(v));
}

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return detail::make_result(std::move(out), parts, [](Node& s) {
    Index off = 0;
    for (std::size_t i = 0; i < s.parents.size(); ++i) {
      const Index r = s.parents[i]->value.rows();
      if (s.parents[i]->requires_grad) s.parents[i]->accumulate(s.grad.middleRows(off, r));
      off += r;
    }
  });
}

inline Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  return detail::make_result(a.value().middleCols(start, count), {&a}, [start, count](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleCols(start, count) = s.grad;
    detail::push(s, 0, g);
  });
}

inline Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  return detail::make_result(a.value().middleRows(start, count), {&a}, [start, count](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    g.middleRows(start, count) = s.grad;
    detail::push(s, 0, g);
  });
}

inline Var gather_rows(const Var& a, std::vector<Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  return detail::make_result(std::move(out), {&a}, [rows = std::move(rows)](Node& s) {
    const Matrix& x = s.parents[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += s.grad.row(static_cast<Index>(i));
    detail::push(s, 0, g);
  });
}

/// Stacks `times` copies of `a` vertically.
inline Var repeat_rows(const Var& a, Index times) {
  Matrix out = a.value().replicate(times, 1);
  return detail::make_result(std::move(out), {&a}, [times](Node& s) {
    const Index r = s.parents[0]->value.rows();
    Matrix g = s.grad.middleRows(0, r);
    for (Index k = 1; k < times; ++k) g += s.grad.middleRows(k * r, r);
    detail::push(s, 0, g);
  });
}

/// E(i, j) = a(i) + b(j) for column vectors a and b.
inline Var pairwise_sum(const Var& a, const Var& b) {
  if (a.cols() != 1 || b.cols() != 1) throw ShapeError("pairwise_sum: expects column vectors");
  const Index n = a.rows(), m = b.rows();
  Matrix out = a.value().replicate(1, m) + b.value().transpose().replicate(n, 1);
  return detail::make_result(std::move(out), {&a, &b}, [](Node& s) {
    if (detail::wants(s, 0)) detail::push(s, 0, s.grad.rowwise().sum());
    if (detail::wants(s, 1)) detail::push(s, 1, s.grad.colwise().sum().transpose());
  });
}

// ---------------------------------------------------------------------------
// Fused LSTM cell (gate order i, f, g, o; a single bias row).
//
// Returns a node whose value is [h' | c'] so both outputs share one backward.

inline Var lstm_cell(const Var& x, const Var& h, const Var& c, const Var& w_ih, const Var& w_hh,
                     const Var& bias) {
  const Index H = h.cols();
  if (w_ih.rows() != 4 * H || w_hh.rows() != 4 * H || w_hh.cols() != H || bias.cols() != 4 * H ||
      x.cols() != w_ih.cols() || c.cols() != H || x.rows() != h.rows() || h.rows() != c.rows()) {
    throw ShapeError("lstm_cell: inconsistent shapes");
  }
  Matrix gates = x.value() * w_ih.value().transpose() + h.value() * w_hh.value().transpose();
  gates.rowwise() += bias.value().row(0);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Matrix act(gates.rows(), gates.cols());
  act.leftCols(2 * H) = gates.leftCols(2 * H).unaryExpr(sig);
  act.middleCols(2 * H, H) = gates.middleCols(2 * H, H).array().tanh().matrix();
  act.rightCols(H) = gates.rightCols(H).unaryExpr(sig);
  const auto i = act.leftCols(H).array();
  const auto f = act.middleCols(H, H).array();
  const auto g = act.middleCols(2 * H, H).array();
  const auto o = act.rightCols(H).array();
  Matrix c_new = (f * c.value().array() + i * g).matrix();
  Matrix tc = c_new.array().tanh().matrix();
  Matrix out(gates.rows(), 2 * H);
  out.leftCols(H) = (o * tc.array()).matrix();
  out.rightCols(H) = c_new;
  return detail::make_result(
      std::move(out), {&x, &h, &c, &w_ih, &w_hh, &bias},
      [act = std::move(act), tc = std::move(tc), H](Node& s) {
        const Matrix& X = s.parents[0]->value;
        const Matrix& Hp = s.parents[1]->value;
        const Matrix& Cp = s.parents[2]->value;
        const Matrix& Wih = s.parents[3]->value;
        const Matrix& Whh = s.parents[4]->value;
        const auto i = act.leftCols(H).array();
        const auto f = act.middleCols(H, H).array();
        const auto g = act.middleCols(2 * H, H).array();
        const auto o = act.rightCols(H).array();
        const auto dh = s.grad.leftCols(H).array();
        const auto dc_in = s.grad.rightCols(H).array();
        Eigen::ArrayXXd dc = dc_in + dh * o * (1.0 - tc.array().square());
        Matrix dgates(act.rows(), 4 * H);
        dgates.leftCols(H) = (dc * g * i * (1.0 - i)).matrix();
        dgates.middleCols(H, H) = (dc * Cp.array() * f * (1.0 - f)).matrix();
        dgates.middleCols(2 * H, H) = (dc * i * (1.0 - g.square())).matrix();
        dgates.rightCols(H) = (dh * tc.array() * o * (1.0 - o)).matrix();
        if (detail::wants(s, 0)) detail::push(s, 0, dgates * Wih);
        if (detail::wants(s, 1)) detail::push(s, 1, dgates * Whh);
        if (detail::wants(s, 2)) detail::push(s, 2, (dc * f).matrix());
        if (detail::wants(s, 3)) detail::push(s, 3, dgates.transpose() * X);
        if (detail::wants(s, 4)) detail::push(s, 4, dgates.transpose() * Hp);
        if (detail::wants(s, 5)) detail::push(s, 5, dgates.colwise().sum());
      });
}

// Operator sugar for readability in model code.
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double k) { return scale(a, k); }
inline Var operator*(double k, const Var& a) { return scale(a, k); }

}  // namespace gtppo::ad
