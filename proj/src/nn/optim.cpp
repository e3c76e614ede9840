#include "lamarl/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace lamarl::nn {

Adam::Adam(std::vector<ParamArray*> params, Real learning_rate, Real beta1, Real beta2, Real epsilon)
    : params_(std::move(params)) {
  state_.learning_rate = learning_rate;
  state_.beta1 = beta1;
  state_.beta2 = beta2;
  state_.epsilon = epsilon;
}

void Adam::step(Real lr_scale) { adam_step(params_, state_, lr_scale); }

void adam_step(const std::vector<ParamArray*>& params, AdamState& s, Real lr_scale) {
  if (s.first_moment.empty()) {
    for (const ParamArray* p : params) {
      s.first_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      s.second_moment.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (s.first_moment.size() != params.size()) throw std::logic_error("adam_step: parameter list changed");
  ++s.step;
  const Real lr = s.learning_rate * lr_scale;
  const Real c1 = 1.0 - std::pow(s.beta1, static_cast<Real>(s.step));
  const Real c2 = 1.0 - std::pow(s.beta2, static_cast<Real>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamArray& p = *params[i];
    if (p.frozen) {
      p.zero_grad();
      continue;
    }
    Matrix& m = s.first_moment[i];
    Matrix& v = s.second_moment[i];
    m = s.beta1 * m + (1.0 - s.beta1) * p.grad;
    v = s.beta2 * v + (1.0 - s.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
    p.zero_grad();
  }
}

Real grad_norm(const std::vector<ParamArray*>& params) {
  Real sq = 0;
  for (const ParamArray* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

Real clip_grad_norm(const std::vector<ParamArray*>& params, Real max_norm) {
  const Real norm = grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const Real f = max_norm / norm;
    for (ParamArray* p : params) p->grad *= f;
  }
  return norm;
}

void zero_grad(const std::vector<ParamArray*>& params) {
  for (ParamArray* p : params) p->zero_grad();
}

}  // namespace lamarl::nn
