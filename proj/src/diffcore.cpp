#include "gpo/diffcore.hpp"

#include <algorithm>
#include <cmath>

#include "gpo/special.hpp"

namespace gpo::diffcore {

const Matrix& Var::value() const {
  if (!tape_) throw CompositionError("use of an unbound Var");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("scalar(): Var is " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(Matrix value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw CompositionError("Var belongs to a different tape");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs,
                        false});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    throw ShapeError("gradient shape " + shape_str(g) + " does not match value " +
                     shape_str(n.value));
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& output) {
  if (output.tape() != this) throw CompositionError("backward on a Var from another tape");
  if (output.rows() != 1 || output.cols() != 1)
    throw ShapeError("backward requires a scalar output, got " + shape_str(output.value()));
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(output.id(), Matrix::Ones(1, 1));
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    const Matrix upstream = n.grad;
    n.backward(*this, upstream);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

Tape& common_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw CompositionError("use of an unbound Var");
  if (a.tape() != b.tape()) throw CompositionError("Vars belong to different tapes");
  return *a.tape();
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw CompositionError("use of an unbound Var");
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(s * a.value(), {a}, [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, s * g); });
}

Var operator*(const Var& a, double s) { return s * a; }

Var operator+(const Var& a, double s) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push((a.value().array() + s).matrix(), {a},
                [ia](Tape& tp, const Matrix& g) { tp.accumulate(ia, g); });
}

Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-1.0 * a) + s; }

Var matmul(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_str(a.value()) + " * " + shape_str(b.value()));
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var hadamard(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
}

Var divide(const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a, b, "divide");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseQuotient(b.value()), {a, b}, [ia, ib](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    const Matrix& y = tp.value(ib);
    if (tp.requires_grad(ia)) tp.accumulate(ia, g.cwiseQuotient(y));
    if (tp.requires_grad(ib))
      tp.accumulate(ib, -(g.array() * x.array() / (y.array() * y.array())).matrix());
  });
}

Var square(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(a.value().cwiseAbs2(), {a}, [ia](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, 2.0 * g.cwiseProduct(tp.value(ia)));
  });
}

Var sigmoid(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return gpo::sigmoid(x); });
  Matrix dsig = out.array() * (1.0 - out.array());
  return t.push(std::move(out), {a}, [ia, d = std::move(dsig)](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(d));
  });
}

Var softplus(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(a.value().unaryExpr([](double x) { return gpo::softplus(x); }), {a},
                [ia](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.cwiseProduct(tp.value(ia).unaryExpr(
                                        [](double x) { return gpo::sigmoid(x); })));
                });
}

Var tanh(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  Matrix out = a.value().array().tanh().matrix();
  Matrix d = 1.0 - out.array().square();
  return t.push(std::move(out), {a}, [ia, d = std::move(d)](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(d));
  });
}

Var log(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(a.value().array().log().matrix(), {a}, [ia](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseQuotient(tp.value(ia)));
  });
}

Var exp(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  Matrix out = a.value().array().exp().matrix();
  Matrix copy = out;
  return t.push(std::move(out), {a}, [ia, y = std::move(copy)](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.cwiseProduct(y));
  });
}

Var lgamma(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  return t.push(a.value().unaryExpr([](double x) { return gpo::log_gamma(x); }), {a},
                [ia](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.cwiseProduct(tp.value(ia).unaryExpr(
                                        [](double x) { return gpo::digamma(x); })));
                });
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), {a}, [ia, r, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
  });
}

Var l1_norm(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().cwiseAbs().sum();
  return t.push(std::move(out), {a}, [ia](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix sgn = x.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
    tp.accumulate(ia, g(0, 0) * sgn);
  });
}

Var row_sum(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  const Index c = a.cols();
  return t.push(a.value().rowwise().sum(), {a}, [ia, c](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g.replicate(1, c));
  });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = common_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols())
    throw ShapeError("add_row: " + shape_str(a.value()) + " + " + shape_str(row.value()));
  const std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(out), {a, row}, [ia, ir](Tape& tp, const Matrix& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  Tape& t = common_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows())
    throw ShapeError("mul_col: " + shape_str(a.value()) + " with " + shape_str(col.value()));
  const std::size_t ia = a.id(), ic = col.id();
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return t.push(std::move(out), {a, col}, [ia, ic](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    const Matrix& c = tp.value(ic);
    if (tp.requires_grad(ia)) tp.accumulate(ia, (g.array().colwise() * c.col(0).array()).matrix());
    if (tp.requires_grad(ic)) tp.accumulate(ic, g.cwiseProduct(x).rowwise().sum());
  });
}

Var broadcast_rows(const Var& row, Index n) {
  Tape& t = tape_of(row);
  if (row.rows() != 1) throw ShapeError("broadcast_rows: expected a row, got " + shape_str(row.value()));
  const std::size_t ir = row.id();
  return t.push(row.value().replicate(n, 1), {row}, [ir](Tape& tp, const Matrix& g) {
    tp.accumulate(ir, g.colwise().sum());
  });
}

Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  Tape& t = tape_of(parts[0]);
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw CompositionError("Vars belong to different tapes");
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  bool needs = false;
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
    needs = needs || t.requires_grad(p.id());
  }
  if (!needs) return t.constant(std::move(out));
  // Attach through the first part for dependency bookkeeping; the closure
  // routes slices to every part.
  Var anchor = parts[0];
  for (const Var& p : parts)
    if (t.requires_grad(p.id())) anchor = p;
  return t.push(std::move(out), {anchor}, [ids, widths](Tape& tp, const Matrix& g) {
    Index off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return t.push(a.value().middleCols(start, count), {a},
                [ia, r, c, start, count](Tape& tp, const Matrix& g) {
                  Matrix full = Matrix::Zero(r, c);
                  full.middleCols(start, count) = g;
                  tp.accumulate(ia, full);
                });
}

Var gather_rows(const Var& a, std::span<const Index> rows) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  const Index r = a.rows();
  std::vector<Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= r) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(k)) = a.value().row(idx[k]);
  }
  return t.push(std::move(out), {a}, [ia, r, idx](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(r, g.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) full.row(idx[k]) += g.row(static_cast<Index>(k));
    tp.accumulate(ia, full);
  });
}

Var log_softmax_rows(const Var& a) {
  Tape& t = tape_of(a);
  const std::size_t ia = a.id();
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    out.row(i) = x.row(i).array() - lse;
  }
  Matrix probs = out.array().exp().matrix();
  return t.push(std::move(out), {a}, [ia, p = std::move(probs)](Tape& tp, const Matrix& g) {
    // d/dx_j = g_j - p_j * sum_k g_k
    Matrix d = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    tp.accumulate(ia, d);
  });
}

Var matrix_power_sum(const Var& w, int k_hops, double scale) {
  if (w.rows() != w.cols())
    throw ShapeError("matrix_power_sum: matrix must be square, got " + shape_str(w.value()));
  if (k_hops < 1) throw ShapeError("matrix_power_sum: K must be >= 1");
  Var result = w;
  Var power = w;
  for (int k = 2; k <= k_hops; ++k) {
    power = matmul(power, w);
    result = result + scale * power;
  }
  return result;
}

// ---- gradient evaluation -----------------------------------------------------

double eval_with_grad(const Objective& objective, std::vector<GradientRecord>& params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const GradientRecord& p : params) vars.push_back(tape.variable(p.value));
  Var out = objective(tape, vars);
  if (out.tape() != &tape) throw CompositionError("objective returned a Var from another tape");
  const double value = out.scalar();
  tape.backward(out);
  for (std::size_t i = 0; i < params.size(); ++i) params[i].gradient = tape.grad(vars[i]);
  return value;
}

double eval_value(const Objective& objective, std::span<const GradientRecord> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const GradientRecord& p : params) vars.push_back(tape.constant(p.value));
  Var out = objective(tape, vars);
  if (out.tape() != &tape) throw CompositionError("objective returned a Var from another tape");
  return out.scalar();
}

std::vector<Matrix> finite_diff_grad(const Objective& objective,
                                     std::span<const GradientRecord> params, double step) {
  if (!(step > 0)) throw ShapeError("finite_diff_grad: step must be positive");
  std::vector<GradientRecord> work(params.begin(), params.end());
  std::vector<Matrix> grads;
  grads.reserve(work.size());
  for (std::size_t p = 0; p < work.size(); ++p) {
    Matrix g(work[p].value.rows(), work[p].value.cols());
    for (Index k = 0; k < g.size(); ++k) {
      const double orig = work[p].value(k);
      work[p].value(k) = orig + step;
      const double fp = eval_value(objective, work);
      work[p].value(k) = orig - step;
      const double fm = eval_value(objective, work);
      work[p].value(k) = orig;
      g(k) = (fp - fm) / (2.0 * step);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_relative_error(std::span<const Matrix> analytic, std::span<const Matrix> numeric,
                          double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("max_relative_error: count mismatch");
  double worst = 0.0;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    if (analytic[p].rows() != numeric[p].rows() || analytic[p].cols() != numeric[p].cols())
      throw ShapeError("max_relative_error: shape mismatch");
    for (Index k = 0; k < analytic[p].size(); ++k) {
      const double a = analytic[p](k), n = numeric[p](k);
      const double denom = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / denom);
    }
  }
  return worst;
}

}  // namespace gpo::diffcore
