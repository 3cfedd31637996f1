#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every intermediate matrix together with a closure that maps
// the upstream gradient onto the parents. Vars are cheap handles into a tape;
// composing Vars from different tapes is a CompositionError.

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gpo/common.hpp"

namespace gpo::diffcore {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 Var.
  double scalar() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Record a node; `backward` runs only if some parent requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Add `g` into the gradient slot of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Matrix& g);

  /// Seed d(output)/d(output) = 1 and sweep nodes in reverse order.
  void backward(const Var& output);

  /// Gradient of the last backward() output with respect to `v`; zeros if untouched.
  Matrix grad(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---- primitives ------------------------------------------------------------

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);

Var matmul(const Var& a, const Var& b);
/// Element-wise product.
Var hadamard(const Var& a, const Var& b);
/// Element-wise quotient.
Var divide(const Var& a, const Var& b);
Var square(const Var& a);

Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var tanh(const Var& a);
Var log(const Var& a);
Var exp(const Var& a);
Var lgamma(const Var& a);

/// Sum of all entries, as a 1x1 Var.
Var sum(const Var& a);
/// Entry-wise absolute sum; subgradient 0 at exact zeros.
Var l1_norm(const Var& a);
/// n x m -> n x 1.
Var row_sum(const Var& a);

/// A (n x m) + r (1 x m) for every row.
Var add_row(const Var& a, const Var& row);
/// A (n x m) scaled row-wise by c (n x 1).
Var mul_col(const Var& a, const Var& col);
/// Repeat a 1 x m row n times.
Var broadcast_rows(const Var& row, Index n);
Var concat_cols(std::span<const Var> parts);
Var concat_cols(std::initializer_list<Var> parts);
Var slice_cols(const Var& a, Index start, Index count);
Var gather_rows(const Var& a, std::span<const Index> rows);
/// Row-wise log-softmax.
Var log_softmax_rows(const Var& a);

/// W + scale * sum_{k=2..K} W^k, by repeated multiplication.
Var matrix_power_sum(const Var& w, int k_hops, double scale);

// ---- plain-matrix counterpart ------------------------------------------------

template <typename Derived>
MatrixX<typename Derived::Scalar> matrix_power_sum(const Eigen::MatrixBase<Derived>& w, int k_hops,
                                                   typename Derived::Scalar scale) {
  using Scalar = typename Derived::Scalar;
  if (w.rows() != w.cols())
    throw ShapeError("matrix_power_sum: matrix must be square, got " + std::to_string(w.rows()) +
                     "x" + std::to_string(w.cols()));
  if (k_hops < 1) throw ShapeError("matrix_power_sum: K must be >= 1");
  MatrixX<Scalar> result = w;
  MatrixX<Scalar> power = w;
  for (int k = 2; k <= k_hops; ++k) {
    power = (power * w).eval();
    result.noalias() += scale * power;
  }
  return result;
}

// ---- gradient evaluation -----------------------------------------------------

struct GradientRecord {
  std::string name;
  Matrix value;
  Matrix gradient;
};

/// Builds a scalar objective on `tape` from Vars wrapping each parameter value.
using Objective = std::function<Var(Tape& tape, std::span<const Var> params)>;

/// Evaluate the objective and fill every record's gradient.
double eval_with_grad(const Objective& objective, std::vector<GradientRecord>& params);

/// Evaluate the objective value only.
double eval_value(const Objective& objective, std::span<const GradientRecord> params);

/// Central differences (f(x+h) - f(x-h)) / 2h, entry by entry.
std::vector<Matrix> finite_diff_grad(const Objective& objective,
                                     std::span<const GradientRecord> params, double step);

/// Largest relative error over all entries; entries where both gradients are
/// below `floor` in magnitude are compared absolutely against `floor`.
double max_relative_error(std::span<const Matrix> analytic, std::span<const Matrix> numeric,
                          double floor = 1e-6);

}  // namespace gpo::diffcore
