#include "lamarl/train/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lamarl::train {

GaeResult compute_gae(std::span<const Real> rewards, std::span<const Real> values, std::span<const bool> dones,
                      Real gamma, Real lambda, Real last_value) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("compute_gae: length mismatch");
  GaeResult out{std::vector<Real>(n), std::vector<Real>(n)};
  Real next_adv = 0;
  Real next_value = last_value;
  for (std::size_t i = n; i-- > 0;) {
    const Real cont = dones[i] ? 0.0 : 1.0;
    const Real delta = rewards[i] + gamma * next_value * cont - values[i];
    next_adv = delta + gamma * lambda * cont * next_adv;
    out.advantages[i] = next_adv;
    out.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return out;
}

Real clipped_surrogate(Real ratio, Real advantage, Real eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1 - eps, 1 + eps) * advantage);
}

Var ppo_surrogate_sum(const Var& lp_new, const Matrix& lp_old, const Matrix& adv, Real eps, const Matrix& mask) {
  Tape& t = lp_new.tape();
  const Var ratio = nn::exp(nn::sub(lp_new, t.constant(lp_old)));
  const Var a = t.constant(adv);
  const Var unclipped = nn::mul(ratio, a);
  const Var clipped = nn::mul(nn::clamp(ratio, 1 - eps, 1 + eps), a);
  return nn::sum(nn::mul(nn::minimum(unclipped, clipped), t.constant(mask)));
}

Real ppo_policy_objective(std::span<const Real> lp_new, std::span<const Real> lp_old, std::span<const Real> adv,
                          Real eps) {
  if (lp_new.size() != lp_old.size() || lp_new.size() != adv.size() || lp_new.empty())
    throw std::invalid_argument("ppo_policy_objective: bad lengths");
  Real s = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) s += clipped_surrogate(std::exp(lp_new[i] - lp_old[i]), adv[i], eps);
  return s / static_cast<Real>(adv.size());
}

Var value_loss_sum(const Var& values, const Matrix& returns, const Matrix& mask) {
  Tape& t = values.tape();
  return nn::sum(nn::mul(nn::square(nn::sub(values, t.constant(returns))), t.constant(mask)));
}

Var clipped_value_loss_sum(const Var& values, const Matrix& old_values, const Matrix& returns, Real clip,
                           const Matrix& mask) {
  Tape& t = values.tape();
  const Var old = t.constant(old_values);
  const Var g = t.constant(returns);
  const Var clipped = nn::add(old, nn::clamp(nn::sub(values, old), -clip, clip));
  const Var a = nn::square(nn::sub(values, g));
  const Var b = nn::square(nn::sub(clipped, g));
  return nn::sum(nn::mul(nn::maximum(a, b), t.constant(mask)));
}

Real value_loss(std::span<const Real> values, std::span<const Real> returns) {
  if (values.size() != returns.size() || values.empty()) throw std::invalid_argument("value_loss: bad lengths");
  Real s = 0;
  for (std::size_t i = 0; i < values.size(); ++i) s += (values[i] - returns[i]) * (values[i] - returns[i]);
  return s / static_cast<Real>(values.size());
}

Var entropy_sum(const Var& log_probs, const Matrix& mask) {
  Tape& t = log_probs.tape();
  const Var p = nn::exp(log_probs);
  return nn::scale(nn::sum(nn::mul(nn::row_sum(nn::mul(p, log_probs)), t.constant(mask))), -1.0);
}

Var clip_loss(const Var& visual, const Var& language) {
  if (visual.rows() != language.rows() || visual.cols() != language.cols())
    throw std::invalid_argument("clip_loss: visual and language batches must match");
  Tape& t = visual.tape();
  const Var cos = nn::matmul_nt(nn::normalize_rows(visual), nn::normalize_rows(language));
  Matrix sign = Matrix::Ones(visual.rows(), visual.rows());
  sign.diagonal().setConstant(-1.0);
  return nn::sum(nn::mul(cos, t.constant(sign)));
}

Var weighted_clip_loss(const Var& visual, const Var& language, const Matrix& weights) {
  if (visual.rows() != language.rows() || visual.cols() != language.cols() || weights.rows() != visual.rows() ||
      weights.cols() != visual.rows())
    throw std::invalid_argument("weighted_clip_loss: shape mismatch");
  Tape& t = visual.tape();
  const Var cos = nn::matmul_nt(nn::normalize_rows(visual), nn::normalize_rows(language));
  return nn::sum(nn::mul(cos, t.constant(weights)));
}

Matrix contrastive_pair_weights(const std::vector<std::vector<int>>& desc) {
  const auto B = static_cast<nn::Index>(desc.size());
  if (B == 0) throw std::invalid_argument("contrastive_pair_weights: empty batch");
  Matrix w = Matrix::Zero(B, B);
  for (nn::Index j = 0; j < B; ++j) {
    w(j, j) = -1.0 / static_cast<Real>(B);
    std::vector<nn::Index> unrelated;
    for (nn::Index k = 0; k < B; ++k)
      if (desc[static_cast<std::size_t>(k)] != desc[static_cast<std::size_t>(j)]) unrelated.push_back(k);
    for (nn::Index k : unrelated) w(j, k) = 1.0 / static_cast<Real>(B * static_cast<nn::Index>(unrelated.size()));
  }
  return w;
}

Real clip_loss_reference(const Matrix& v, const Matrix& l) {
  Real s = 0;
  for (nn::Index j = 0; j < v.rows(); ++j)
    for (nn::Index k = 0; k < l.rows(); ++k) {
      Real dot = 0, nv = 0, nl = 0;
      for (nn::Index c = 0; c < v.cols(); ++c) {
        dot += v(j, c) * l(k, c);
        nv += v(j, c) * v(j, c);
        nl += l(k, c) * l(k, c);
      }
      const Real cos = dot / (std::sqrt(nv) * std::sqrt(nl));
      s += j == k ? -cos : cos;
    }
  return s;
}

Var autoencoder_loss_sum(const Var& recon, const Matrix& target, const Matrix& mask) {
  Tape& t = recon.tape();
  const Var se = nn::row_sum(nn::square(nn::sub(recon, t.constant(target))));
  return nn::scale(nn::sum(nn::mul(se, t.constant(mask))), 1.0 / static_cast<Real>(target.cols()));
}

Var langground_loss_sum(const Var& message, const Matrix& target, const Matrix& mask) {
  Tape& t = message.tape();
  const Var se = nn::row_sum(nn::square(nn::sub(message, t.constant(target))));
  return nn::sum(nn::mul(se, t.constant(mask)));
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::Policy: return "policy";
    case LossKind::Value: return "value";
    case LossKind::Caption: return "caption";
    case LossKind::Clip: return "clip";
    case LossKind::AutoEncoder: return "autoencoder";
    case LossKind::LangGround: return "langground";
  }
  return "?";
}

LossWeights dynamic_weights(const LossArray& previous, const std::array<bool, kNumLossKinds>& active) {
  LossWeights w;
  w.active = active;
  for (std::size_t k = 0; k < kNumLossKinds; ++k) {
    if (!active[k]) {
      w.beta[k] = 0.0;
      continue;
    }
    const auto& prev = previous[k];
    w.beta[k] = prev && *prev != 0.0 ? 1.0 / std::abs(*prev) : 1.0;
  }
  return w;
}

}  // namespace lamarl::train
