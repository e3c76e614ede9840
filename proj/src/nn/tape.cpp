#include "lamarl/nn/tape.hpp"

#include <stdexcept>

namespace lamarl::nn {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, false, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamArray& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, Matrix(), !p.frozen, false, &p, nullptr});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, false, nullptr,
                        requires_grad ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id());
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& root, Real seed) {
  if (!root.valid() || &root.tape() != this || root.id() >= nodes_.size())
    throw std::logic_error("backward: root was not recorded on this tape");
  if (backward_done_) throw std::logic_error("backward: tape already consumed");
  const Node& r = nodes_[root.id()];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  backward_done_ = true;
  if (!r.requires_grad) return;

  accumulate(root.id(), Matrix::Constant(1, 1, seed));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    // The callback may accumulate into earlier nodes only, so `n.grad` is stable.
    n.backward(*this, n.grad);
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && n.has_grad && !n.param->frozen) n.param->grad += n.grad;
  }
}

}  // namespace lamarl::nn
