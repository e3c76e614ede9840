#pragma once

#include "lamarl/nn/layers.hpp"

#include <span>
#include <vector>

namespace lamarl::nn {

/// Discrete distribution parameterised by unnormalised logits.
class Categorical {
 public:
  explicit Categorical(std::span<const Real> logits);
  explicit Categorical(const Eigen::Ref<const Eigen::RowVectorXd>& logits);

  int size() const { return static_cast<int>(log_probs_.size()); }
  Real prob(int index) const;
  Real log_prob(int index) const;
  Real entropy() const;
  int sample(Rng& rng) const;
  int argmax() const;
  const std::vector<Real>& probs() const { return probs_; }

 private:
  std::vector<Real> log_probs_;
  std::vector<Real> probs_;
};

}  // namespace lamarl::nn
