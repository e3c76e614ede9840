#pragma once

#include "lamarl/nn/tape.hpp"

#include <vector>

namespace lamarl::nn {

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
  Real learning_rate = 5e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-5;
};

/// Adam over a fixed list of parameters. Gradients are zeroed after each step.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamArray*> params, Real learning_rate, Real beta1 = 0.9, Real beta2 = 0.999,
       Real epsilon = 1e-5);

  /// Applies one bias-corrected update with lr = learning_rate * lr_scale.
  void step(Real lr_scale = 1.0);

  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }
  const std::vector<ParamArray*>& params() const { return params_; }

 private:
  std::vector<ParamArray*> params_;
  AdamState state_;
};

/// Free-function form of Adam::step for callers holding their own state.
void adam_step(const std::vector<ParamArray*>& params, AdamState& state, Real lr_scale = 1.0);

/// Global L2 norm of all gradients.
Real grad_norm(const std::vector<ParamArray*>& params);
/// Rescales gradients so their global norm is at most max_norm; returns the pre-clip norm.
Real clip_grad_norm(const std::vector<ParamArray*>& params, Real max_norm);
void zero_grad(const std::vector<ParamArray*>& params);

}  // namespace lamarl::nn
