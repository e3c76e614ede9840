#include "lamarl/nn/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lamarl::nn {

namespace {

bool any_grad(const Var& a) { return a.tape().requires_grad(a.id()); }
bool any_grad(const Var& a, const Var& b) { return any_grad(a) || any_grad(b); }

void check_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("ops: operands live on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  check_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
}

template <typename F>
Var unary(const Var& a, Matrix value, F&& backward) {
  const std::size_t ia = a.id();
  return a.tape().record(std::move(value), any_grad(a),
                         [ia, backward = std::forward<F>(backward)](Tape& t, const Matrix& g) {
                           t.accumulate(ia, backward(t, g));
                         });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimension mismatch " + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()));
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() * b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: column mismatch");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() * b.value().transpose(), any_grad(a, b),
                         [ia, ib](Tape& t, const Matrix& g) {
                           if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
                           if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
                         });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), any_grad(a, b),
                         [ia, ib](Tape& t, const Matrix& g) {
                           if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                         });
}

Var add_row(const Var& a, const Var& row) {
  check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: row shape mismatch");
  const std::size_t ia = a.id(), ir = row.id();
  Matrix v = a.value().rowwise() + row.value().row(0);
  return a.tape().record(std::move(v), any_grad(a, row), [ia, ir](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  check_same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: column shape mismatch");
  const std::size_t ia = a.id(), ic = col.id();
  Matrix v = a.value().array().colwise() * col.value().col(0).array();
  return a.tape().record(std::move(v), any_grad(a, col), [ia, ic](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) {
      Matrix ga = g.array().colwise() * t.value(ic).col(0).array();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ic)) t.accumulate(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
  });
}

Var div_col(const Var& a, const Var& col) {
  check_same_tape(a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("div_col: column shape mismatch");
  const std::size_t ia = a.id(), ic = col.id();
  Matrix v = a.value().array().colwise() / col.value().col(0).array();
  return a.tape().record(std::move(v), any_grad(a, col), [ia, ic](Tape& t, const Matrix& g) {
    const auto c = t.value(ic).col(0).array();
    if (t.requires_grad(ia)) {
      Matrix ga = g.array().colwise() / c;
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ic)) {
      Matrix gc = -(g.cwiseProduct(t.value(ia)).rowwise().sum().array() / c.square()).matrix();
      t.accumulate(ic, gc);
    }
  });
}

Var scale(const Var& a, Real s) {
  return unary(a, a.value() * s, [s](Tape&, const Matrix& g) -> Matrix { return g * s; });
}

Var add_scalar(const Var& a, Real s) {
  return unary(a, (a.value().array() + s).matrix(), [](Tape&, const Matrix& g) -> Matrix { return g; });
}

Var one_minus(const Var& a) {
  return unary(a, (1.0 - a.value().array()).matrix(), [](Tape&, const Matrix& g) -> Matrix { return -g; });
}

Var tanh(const Var& a) {
  Matrix v = a.value().array().tanh().matrix();
  Matrix d = (1.0 - v.array().square()).matrix();
  return unary(a, std::move(v), [d = std::move(d)](Tape&, const Matrix& g) -> Matrix { return g.cwiseProduct(d); });
}

Var sigmoid(const Var& a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Matrix d = (v.array() * (1.0 - v.array())).matrix();
  return unary(a, std::move(v), [d = std::move(d)](Tape&, const Matrix& g) -> Matrix { return g.cwiseProduct(d); });
}

Var relu(const Var& a) {
  Matrix v = a.value().cwiseMax(0.0);
  const std::size_t ia = a.id();
  return unary(a, std::move(v), [ia](Tape& t, const Matrix& g) -> Matrix {
    return (t.value(ia).array() > 0.0).select(g, 0.0);
  });
}

Var exp(const Var& a) {
  Matrix v = a.value().array().exp().matrix();
  Matrix d = v;
  return unary(a, std::move(v), [d = std::move(d)](Tape&, const Matrix& g) -> Matrix { return g.cwiseProduct(d); });
}

Var log(const Var& a) {
  const std::size_t ia = a.id();
  return unary(a, a.value().array().log().matrix(), [ia](Tape& t, const Matrix& g) -> Matrix {
    return g.cwiseQuotient(t.value(ia));
  });
}

Var square(const Var& a) {
  const std::size_t ia = a.id();
  return unary(a, a.value().array().square().matrix(), [ia](Tape& t, const Matrix& g) -> Matrix {
    return 2.0 * g.cwiseProduct(t.value(ia));
  });
}

Var sqrt(const Var& a) {
  Matrix v = a.value().array().sqrt().matrix();
  Matrix d = (0.5 / v.array()).matrix();
  return unary(a, std::move(v), [d = std::move(d)](Tape&, const Matrix& g) -> Matrix { return g.cwiseProduct(d); });
}

Var clamp(const Var& a, Real lo, Real hi) {
  const std::size_t ia = a.id();
  return unary(a, a.value().cwiseMax(lo).cwiseMin(hi), [ia, lo, hi](Tape& t, const Matrix& g) -> Matrix {
    const auto& x = t.value(ia).array();
    return ((x > lo) && (x < hi)).select(g, 0.0);
  });
}

Var minimum(const Var& a, const Var& b) {
  check_same_shape(a, b, "minimum");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseMin(b.value()), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    const auto take_a = (t.value(ia).array() <= t.value(ib).array());
    if (t.requires_grad(ia)) t.accumulate(ia, take_a.select(g, 0.0));
    if (t.requires_grad(ib)) t.accumulate(ib, take_a.select(0.0, g));
  });
}

Var maximum(const Var& a, const Var& b) {
  check_same_shape(a, b, "maximum");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseMax(b.value()), any_grad(a, b), [ia, ib](Tape& t, const Matrix& g) {
    const auto take_a = (t.value(ia).array() >= t.value(ib).array());
    if (t.requires_grad(ia)) t.accumulate(ia, take_a.select(g, 0.0));
    if (t.requires_grad(ib)) t.accumulate(ib, take_a.select(0.0, g));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Tape& tape = parts.front().tape();
  const Index rows = parts.front().rows();
  Index cols = 0;
  bool needs = false;
  for (const Var& p : parts) {
    if (&p.tape() != &tape) throw std::invalid_argument("concat_cols: operands live on different tapes");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
    needs = needs || any_grad(p);
  }
  Matrix v(rows, cols);
  std::vector<std::pair<std::size_t, Index>> pieces;  // (node id, column offset)
  Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    pieces.emplace_back(p.id(), at);
    at += p.cols();
  }
  return tape.record(std::move(v), needs, [pieces = std::move(pieces)](Tape& t, const Matrix& g) {
    for (const auto& [id, off] : pieces) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(off, t.value(id).cols()));
    }
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  const Index rows = a.rows(), cols = a.cols();
  return unary(a, a.value().middleCols(start, count), [rows, cols, start, count](Tape&, const Matrix& g) -> Matrix {
    Matrix full = Matrix::Zero(rows, cols);
    full.middleCols(start, count) = g;
    return full;
  });
}

Var sum(const Var& a) {
  const Index rows = a.rows(), cols = a.cols();
  return unary(a, Matrix::Constant(1, 1, a.value().sum()), [rows, cols](Tape&, const Matrix& g) -> Matrix {
    return Matrix::Constant(rows, cols, g(0, 0));
  });
}

Var mean(const Var& a) {
  const Index rows = a.rows(), cols = a.cols();
  const Real n = static_cast<Real>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty input");
  return unary(a, Matrix::Constant(1, 1, a.value().sum() / n), [rows, cols, n](Tape&, const Matrix& g) -> Matrix {
    return Matrix::Constant(rows, cols, g(0, 0) / n);
  });
}

Var row_sum(const Var& a) {
  const Index cols = a.cols();
  return unary(a, a.value().rowwise().sum(), [cols](Tape&, const Matrix& g) -> Matrix {
    return g.replicate(1, cols);
  });
}

Matrix log_softmax_rows(const Matrix& logits) {
  Matrix shifted = logits.colwise() - logits.rowwise().maxCoeff();
  Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

Matrix softmax_rows(const Matrix& logits) { return log_softmax_rows(logits).array().exp().matrix(); }

Var log_softmax_rows(const Var& a) {
  Matrix v = log_softmax_rows(a.value());
  Matrix p = v.array().exp().matrix();
  return unary(a, std::move(v), [p = std::move(p)](Tape&, const Matrix& g) -> Matrix {
    Matrix out = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    return out;
  });
}

Var softmax_rows(const Var& a) {
  Matrix p = softmax_rows(a.value());
  Matrix pc = p;
  return unary(a, std::move(p), [pc = std::move(pc)](Tape&, const Matrix& g) -> Matrix {
    Eigen::VectorXd dot = g.cwiseProduct(pc).rowwise().sum();
    Matrix out = pc.array() * (g.colwise() - dot).array();
    return out;
  });
}

Var pick(const Var& a, std::span<const int> index) {
  if (static_cast<Index>(index.size()) != a.rows()) throw std::invalid_argument("pick: index count != rows");
  Matrix v(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    const int k = index[static_cast<std::size_t>(i)];
    if (k < 0 || k >= a.cols()) throw std::out_of_range("pick: index out of range");
    v(i, 0) = a.value()(i, k);
  }
  std::vector<int> idx(index.begin(), index.end());
  const Index rows = a.rows(), cols = a.cols();
  return unary(a, std::move(v), [idx = std::move(idx), rows, cols](Tape&, const Matrix& g) -> Matrix {
    Matrix out = Matrix::Zero(rows, cols);
    for (Index i = 0; i < rows; ++i) out(i, idx[static_cast<std::size_t>(i)]) = g(i, 0);
    return out;
  });
}

Var embedding_lookup(const Var& table, std::span<const int> ids) {
  const Index n = static_cast<Index>(ids.size());
  Matrix v(n, table.cols());
  for (Index i = 0; i < n; ++i) {
    const int k = ids[static_cast<std::size_t>(i)];
    if (k < 0 || k >= table.rows()) throw std::out_of_range("embedding_lookup: token id out of range");
    v.row(i) = table.value().row(k);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  const Index rows = table.rows(), cols = table.cols();
  return unary(table, std::move(v), [idx = std::move(idx), rows, cols](Tape&, const Matrix& g) -> Matrix {
    Matrix out = Matrix::Zero(rows, cols);
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(idx[i]) += g.row(static_cast<Index>(i));
    return out;
  });
}

Var blend(const Matrix& mask, const Var& a, const Var& b) {
  check_same_shape(a, b, "blend");
  if (mask.cols() != 1 || mask.rows() != a.rows()) throw std::invalid_argument("blend: mask shape mismatch");
  Matrix v = (a.value().array().colwise() * mask.col(0).array() +
              b.value().array().colwise() * (1.0 - mask.col(0).array()))
                 .matrix();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(v), any_grad(a, b), [ia, ib, mask](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) {
      Matrix ga = g.array().colwise() * mask.col(0).array();
      t.accumulate(ia, ga);
    }
    if (t.requires_grad(ib)) {
      Matrix gb = g.array().colwise() * (1.0 - mask.col(0).array());
      t.accumulate(ib, gb);
    }
  });
}

Var normalize_rows(const Var& a, Real eps) {
  Eigen::VectorXd norms = a.value().rowwise().norm().cwiseMax(eps);
  Matrix v = a.value().array().colwise() / norms.array();
  Matrix unit = v;
  return unary(a, std::move(v), [unit = std::move(unit), norms = std::move(norms)](Tape&, const Matrix& g) -> Matrix {
    // d(x/|x|) = (g - u (u.g)) / |x|
    Eigen::VectorXd dot = g.cwiseProduct(unit).rowwise().sum();
    Matrix out = (g - (unit.array().colwise() * dot.array()).matrix()).array().colwise() / norms.array();
    return out;
  });
}

}  // namespace lamarl::nn
