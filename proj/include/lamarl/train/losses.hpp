#pragma once

#include "lamarl/nn/ops.hpp"

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace lamarl::train {

using nn::Matrix;
using nn::Real;
using nn::Tape;
using nn::Var;

struct GaeResult {
  std::vector<Real> advantages;
  std::vector<Real> returns;
};

/// Generalized advantage estimation over one trajectory. `dones[t]` marks a
/// terminal transition after step t; `last_value` bootstraps a cut-off tail.
GaeResult compute_gae(std::span<const Real> rewards, std::span<const Real> values, std::span<const bool> dones,
                      Real gamma, Real lambda, Real last_value = 0.0);

/// min(r A, clip(r, 1-eps, 1+eps) A) for one sample.
Real clipped_surrogate(Real ratio, Real advantage, Real eps);

/// Clipped surrogate summed over rows with mask 1 (to be maximized).
Var ppo_surrogate_sum(const Var& log_probs_new, const Matrix& log_probs_old, const Matrix& advantages, Real eps,
                      const Matrix& mask);
/// Plain mean of clipped_surrogate over a batch.
Real ppo_policy_objective(std::span<const Real> log_probs_new, std::span<const Real> log_probs_old,
                          std::span<const Real> advantages, Real eps);

/// Sum of (V - G)^2 over rows with mask 1.
Var value_loss_sum(const Var& values, const Matrix& returns, const Matrix& mask);
/// Sum of max((V - G)^2, (V_old + clip(V - V_old, -c, c) - G)^2) over rows with mask 1.
Var clipped_value_loss_sum(const Var& values, const Matrix& old_values, const Matrix& returns, Real clip,
                           const Matrix& mask);
/// Mean of (V - G)^2.
Real value_loss(std::span<const Real> values, std::span<const Real> returns);

/// Sum over rows (mask 1) of the categorical entropy of softmax(logits).
Var entropy_sum(const Var& log_probs, const Matrix& mask);

/// sum_{j,k} s_jk cos(v_j, l_k) with s = -1 on the diagonal and +1 elsewhere.
Var clip_loss(const Var& visual, const Var& language);
/// Scalar double-loop reference of clip_loss.
Real clip_loss_reference(const Matrix& visual, const Matrix& language);

/// sum_{j,k} w_jk cos(v_j, l_k).
Var weighted_clip_loss(const Var& visual, const Var& language, const Matrix& weights);
/// Balanced contrastive weights: -1/B on the diagonal, +1/(B |U_j|) on the pairs
/// whose descriptions differ (U_j), 0 on off-diagonal pairs sharing a description.
Matrix contrastive_pair_weights(const std::vector<std::vector<int>>& descriptions);

/// Mean squared reconstruction error over rows with mask 1 (averaged over columns).
Var autoencoder_loss_sum(const Var& reconstruction, const Matrix& target, const Matrix& mask);
/// Squared distance to the target embedding summed over rows with mask 1.
Var langground_loss_sum(const Var& message, const Matrix& target, const Matrix& mask);

enum class LossKind { Policy, Value, Caption, Clip, AutoEncoder, LangGround };
inline constexpr int kNumLossKinds = 6;
std::string_view to_string(LossKind k);

using LossArray = std::array<std::optional<Real>, kNumLossKinds>;

/// Per-agent loss weights. Active losses are those the variant optimizes.
struct LossWeights {
  std::array<Real, kNumLossKinds> beta{1, 1, 1, 1, 1, 1};
  std::array<bool, kNumLossKinds> active{true, true, false, false, false, false};
  Real operator[](LossKind k) const { return beta[static_cast<std::size_t>(k)]; }
  bool on(LossKind k) const { return active[static_cast<std::size_t>(k)]; }
};

/// beta_k = 1 / |L_{k-1}| for each active loss with a recorded previous value;
/// 1 without history (or for an exactly zero loss); 0 for inactive losses.
LossWeights dynamic_weights(const LossArray& previous, const std::array<bool, kNumLossKinds>& active);

}  // namespace lamarl::train
