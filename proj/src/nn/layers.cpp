#include "lamarl/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace lamarl::nn {

Matrix apply(Activation act, const Matrix& x) {
  switch (act) {
    case Activation::None: return x;
    case Activation::Tanh: return x.array().tanh().matrix();
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::Softmax: return softmax_rows(x);
  }
  return x;
}

Var apply(Activation act, const Var& x) {
  switch (act) {
    case Activation::None: return x;
    case Activation::Tanh: return tanh(x);
    case Activation::Relu: return relu(x);
    case Activation::Softmax: return softmax_rows(x);
  }
  return x;
}

Real init_gain(Activation act) {
  switch (act) {
    case Activation::Relu: return std::sqrt(2.0);
    case Activation::Tanh: return 5.0 / 3.0;
    default: return 1.0;
  }
}

Matrix scaled_uniform(int rows, int cols, Real gain, Rng& rng) {
  const Real a = gain * std::sqrt(6.0 / static_cast<Real>(rows + cols));
  std::uniform_real_distribution<Real> u(-a, a);
  Matrix m(rows, cols);
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
  return m;
}

Matrix orthogonal(int n, Rng& rng) {
  std::normal_distribution<Real> nd(0.0, 1.0);
  Matrix a(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a(i, j) = nd(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix r = qr.matrixQR();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

// ---- Dense -----------------------------------------------------------------

Dense::Dense(std::string name, int in, int out, Activation act, Rng& rng, Real gain_override)
    : weight(name + "/W", scaled_uniform(in, out, gain_override > 0 ? gain_override : init_gain(act), rng)),
      bias(name + "/b", Matrix::Zero(1, out)),
      activation(act) {
  if (in < 1 || out < 1) throw std::invalid_argument("Dense: dims must be >= 1");
}

Matrix Dense::forward(const Matrix& x) const {
  if (x.cols() != weight.value.rows())
    throw std::invalid_argument("Dense " + weight.name + ": expected " + std::to_string(weight.value.rows()) +
                                " inputs, got " + std::to_string(x.cols()));
  Matrix y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return apply(activation, y);
}

Var Dense::forward(Tape& t, const Var& x) {
  if (x.cols() != weight.value.rows())
    throw std::invalid_argument("Dense " + weight.name + ": expected " + std::to_string(weight.value.rows()) +
                                " inputs, got " + std::to_string(x.cols()));
  return apply(activation, add_row(matmul(x, t.param(weight)), t.param(bias)));
}

void Dense::collect(std::vector<ParamArray*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

// ---- GRUCell ---------------------------------------------------------------

GRUCell::GRUCell(std::string name, int in, int hidden, Rng& rng)
    : w_input(name + "/W_input", Matrix(in, 3 * hidden)),
      w_hidden(name + "/W_hidden", Matrix(hidden, 3 * hidden)),
      b_input(name + "/b_input", Matrix::Zero(1, 3 * hidden)),
      b_hidden(name + "/b_hidden", Matrix::Zero(1, 3 * hidden)) {
  if (in < 1 || hidden < 1) throw std::invalid_argument("GRUCell: dims must be >= 1");
  for (int g = 0; g < 3; ++g) {
    w_input.value.middleCols(g * hidden, hidden) = scaled_uniform(in, hidden, 1.0, rng);
    w_hidden.value.middleCols(g * hidden, hidden) = orthogonal(hidden, rng);
  }
}

Matrix GRUCell::forward(const Matrix& x, const Matrix& h) const {
  const Index hd = w_hidden.value.rows();
  if (x.cols() != w_input.value.rows() || h.cols() != hd || x.rows() != h.rows())
    throw std::invalid_argument("GRUCell " + w_input.name + ": dim mismatch");
  Matrix gi = x * w_input.value;
  gi.rowwise() += b_input.value.row(0);
  Matrix gh = h * w_hidden.value;
  gh.rowwise() += b_hidden.value.row(0);
  const auto sig = [](const auto& v) { return (1.0 / (1.0 + (-v).exp())); };
  const Eigen::ArrayXXd r = sig((gi.leftCols(hd) + gh.leftCols(hd)).array());
  const Eigen::ArrayXXd z = sig((gi.middleCols(hd, hd) + gh.middleCols(hd, hd)).array());
  const Eigen::ArrayXXd n = (gi.rightCols(hd).array() + r * gh.rightCols(hd).array()).tanh();
  return ((1.0 - z) * n + z * h.array()).matrix();
}

Var GRUCell::forward(Tape& t, const Var& x, const Var& h) {
  const Index hd = w_hidden.value.rows();
  if (x.cols() != w_input.value.rows() || h.cols() != hd || x.rows() != h.rows())
    throw std::invalid_argument("GRUCell " + w_input.name + ": dim mismatch");
  const Var gi = add_row(matmul(x, t.param(w_input)), t.param(b_input));
  const Var gh = add_row(matmul(h, t.param(w_hidden)), t.param(b_hidden));
  const Var r = sigmoid(add(slice_cols(gi, 0, hd), slice_cols(gh, 0, hd)));
  const Var z = sigmoid(add(slice_cols(gi, hd, hd), slice_cols(gh, hd, hd)));
  const Var n = tanh(add(slice_cols(gi, 2 * hd, hd), mul(r, slice_cols(gh, 2 * hd, hd))));
  return add(mul(one_minus(z), n), mul(z, h));
}

void GRUCell::collect(std::vector<ParamArray*>& out) {
  out.push_back(&w_input);
  out.push_back(&w_hidden);
  out.push_back(&b_input);
  out.push_back(&b_hidden);
}

// ---- Embedding -------------------------------------------------------------

Embedding::Embedding(std::string name, int vocab, int dim, Rng& rng) : table(name + "/table", Matrix(vocab, dim)) {
  if (vocab < 1 || dim < 1) throw std::invalid_argument("Embedding: dims must be >= 1");
  std::normal_distribution<Real> nd(0.0, 1.0);
  for (Index j = 0; j < table.value.cols(); ++j)
    for (Index i = 0; i < table.value.rows(); ++i) table.value(i, j) = nd(rng);
}

Matrix Embedding::forward(std::span<const int> ids) const {
  Matrix out(static_cast<Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows()) throw std::out_of_range("Embedding: token id out of range");
    out.row(static_cast<Index>(i)) = table.value.row(ids[i]);
  }
  return out;
}

Var Embedding::forward(Tape& t, std::span<const int> ids) { return embedding_lookup(t.param(table), ids); }

void Embedding::collect(std::vector<ParamArray*>& out) { out.push_back(&table); }

// ---- LayerStack ------------------------------------------------------------

LayerStack::LayerStack(std::string name, std::span<const LayerSpec> specs, Rng& rng) {
  int recurrent_layers = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    if (s.input_dim < 1 || s.output_dim < 1) throw std::invalid_argument("LayerStack: dims must be >= 1");
    if (i > 0 && specs[i - 1].output_dim != s.input_dim)
      throw std::invalid_argument("LayerStack: layer " + std::to_string(i) + " input does not match previous output");
    const std::string lname = name + "/" + std::to_string(i);
    switch (s.kind) {
      case LayerKind::Dense: layers_.emplace_back(Dense(lname, s.input_dim, s.output_dim, s.activation, rng)); break;
      case LayerKind::GRUCell:
        if (++recurrent_layers > 1) throw std::invalid_argument("LayerStack: at most one recurrent layer");
        layers_.emplace_back(GRUCell(lname, s.input_dim, s.output_dim, rng));
        break;
      case LayerKind::Embedding:
        if (i != 0) throw std::invalid_argument("LayerStack: embedding must be the first layer");
        layers_.emplace_back(Embedding(lname, s.input_dim, s.output_dim, rng));
        break;
    }
  }
}

namespace {
std::vector<int> ids_from_column(const Matrix& x) {
  if (x.cols() != 1) throw std::invalid_argument("LayerStack: embedding input must be a single id column");
  std::vector<int> ids(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) ids[static_cast<std::size_t>(i)] = static_cast<int>(x(i, 0));
  return ids;
}
}  // namespace

LayerStack::Output LayerStack::forward(const Matrix& x, const std::optional<Matrix>& hidden) const {
  Output out{x, std::nullopt};
  for (const Layer& l : layers_) {
    if (const auto* d = std::get_if<Dense>(&l)) {
      out.output = d->forward(out.output);
    } else if (const auto* g = std::get_if<GRUCell>(&l)) {
      const Matrix h = hidden ? *hidden : Matrix::Zero(out.output.rows(), g->hidden_dim());
      out.output = g->forward(out.output, h);
      out.hidden = out.output;
    } else {
      out.output = std::get<Embedding>(l).forward(ids_from_column(out.output));
    }
  }
  return out;
}

LayerStack::VarOutput LayerStack::forward(Tape& t, const Var& x, const std::optional<Var>& hidden) {
  VarOutput out{x, std::nullopt};
  for (Layer& l : layers_) {
    if (auto* d = std::get_if<Dense>(&l)) {
      out.output = d->forward(t, out.output);
    } else if (auto* g = std::get_if<GRUCell>(&l)) {
      const Var h = hidden ? *hidden : t.constant(Matrix::Zero(out.output.rows(), g->hidden_dim()));
      out.output = g->forward(t, out.output, h);
      out.hidden = out.output;
    } else {
      out.output = std::get<Embedding>(l).forward(t, ids_from_column(out.output.value()));
    }
  }
  return out;
}

void LayerStack::collect(std::vector<ParamArray*>& out) {
  for (Layer& l : layers_) std::visit([&out](auto& layer) { layer.collect(out); }, l);
}

bool LayerStack::recurrent() const {
  for (const Layer& l : layers_)
    if (std::holds_alternative<GRUCell>(l)) return true;
  return false;
}

int LayerStack::output_dim() const {
  if (layers_.empty()) throw std::logic_error("LayerStack: empty");
  return std::visit(
      [](const auto& layer) {
        using T = std::decay_t<decltype(layer)>;
        if constexpr (std::is_same_v<T, Dense>) return layer.output_dim();
        else if constexpr (std::is_same_v<T, GRUCell>) return layer.hidden_dim();
        else return layer.dim();
      },
      layers_.back());
}

}  // namespace lamarl::nn
