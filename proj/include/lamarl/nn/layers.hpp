#pragma once

#include "lamarl/nn/ops.hpp"
#include "lamarl/nn/tape.hpp"

#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lamarl::nn {

using Rng = std::mt19937_64;

enum class Activation { None, Tanh, Relu, Softmax };
enum class LayerKind { Dense, GRUCell, Embedding };

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  int input_dim = 1;
  int output_dim = 1;
  Activation activation = Activation::None;
};

Matrix apply(Activation act, const Matrix& x);
Var apply(Activation act, const Var& x);
/// Init gain for a dense layer feeding into `act`.
Real init_gain(Activation act);

/// Fully connected layer: y = act(x W + b), W is in x out.
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, int in, int out, Activation act, Rng& rng, Real gain_override = 0.0);

  Matrix forward(const Matrix& x) const;
  Var forward(Tape& t, const Var& x);

  void collect(std::vector<ParamArray*>& out);
  int input_dim() const { return static_cast<int>(weight.value.rows()); }
  int output_dim() const { return static_cast<int>(weight.value.cols()); }

  ParamArray weight;
  ParamArray bias;
  Activation activation = Activation::None;
};

/// Gated recurrent unit with reset/update/new gates packed as [r | z | n].
class GRUCell {
 public:
  GRUCell() = default;
  GRUCell(std::string name, int in, int hidden, Rng& rng);

  Matrix forward(const Matrix& x, const Matrix& h) const;
  Var forward(Tape& t, const Var& x, const Var& h);

  void collect(std::vector<ParamArray*>& out);
  int input_dim() const { return static_cast<int>(w_input.value.rows()); }
  int hidden_dim() const { return static_cast<int>(w_hidden.value.rows()); }

  ParamArray w_input;   // in x 3H
  ParamArray w_hidden;  // H x 3H
  ParamArray b_input;   // 1 x 3H
  ParamArray b_hidden;  // 1 x 3H
};

class Embedding {
 public:
  Embedding() = default;
  Embedding(std::string name, int vocab, int dim, Rng& rng);

  Matrix forward(std::span<const int> ids) const;
  Var forward(Tape& t, std::span<const int> ids);

  void collect(std::vector<ParamArray*>& out);
  int vocab_size() const { return static_cast<int>(table.value.rows()); }
  int dim() const { return static_cast<int>(table.value.cols()); }

  ParamArray table;
};

/// A feed-forward stack with at most one recurrent cell.
///
/// Embedding layers may only come first; their input column holds token ids.
/// A GRU layer consumes the hidden state passed to forward() and its output
/// becomes the stack's new hidden state.
class LayerStack {
 public:
  LayerStack() = default;
  LayerStack(std::string name, std::span<const LayerSpec> specs, Rng& rng);

  struct Output {
    Matrix output;
    std::optional<Matrix> hidden;
  };
  struct VarOutput {
    Var output;
    std::optional<Var> hidden;
  };

  Output forward(const Matrix& x, const std::optional<Matrix>& hidden = std::nullopt) const;
  VarOutput forward(Tape& t, const Var& x, const std::optional<Var>& hidden = std::nullopt);

  void collect(std::vector<ParamArray*>& out);
  bool recurrent() const;
  int output_dim() const;
  std::size_t depth() const { return layers_.size(); }

 private:
  using Layer = std::variant<Dense, GRUCell, Embedding>;
  std::vector<Layer> layers_;
};

/// Uniform(-a, a) with a = gain * sqrt(6 / (in + out)).
Matrix scaled_uniform(int rows, int cols, Real gain, Rng& rng);
/// Square orthogonal matrix from the QR factorisation of a Gaussian draw.
Matrix orthogonal(int n, Rng& rng);

}  // namespace lamarl::nn
