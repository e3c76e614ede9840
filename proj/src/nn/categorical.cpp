#include "lamarl/nn/categorical.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lamarl::nn {

Categorical::Categorical(std::span<const Real> logits) {
  if (logits.empty()) throw std::invalid_argument("Categorical: empty logits");
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Real z = 0;
  for (Real l : logits) z += std::exp(l - mx);
  const Real lse = mx + std::log(z);
  log_probs_.reserve(logits.size());
  probs_.reserve(logits.size());
  for (Real l : logits) {
    log_probs_.push_back(l - lse);
    probs_.push_back(std::exp(l - lse));
  }
}

Categorical::Categorical(const Eigen::Ref<const Eigen::RowVectorXd>& logits)
    : Categorical(std::span<const Real>(logits.data(), static_cast<std::size_t>(logits.size()))) {}

Real Categorical::prob(int index) const { return probs_.at(static_cast<std::size_t>(index)); }
Real Categorical::log_prob(int index) const { return log_probs_.at(static_cast<std::size_t>(index)); }

Real Categorical::entropy() const {
  Real h = 0;
  for (std::size_t i = 0; i < probs_.size(); ++i)
    if (probs_[i] > 0) h -= probs_[i] * log_probs_[i];
  return h;
}

int Categorical::sample(Rng& rng) const {
  std::uniform_real_distribution<Real> u(0.0, 1.0);
  const Real x = u(rng);
  Real acc = 0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    acc += probs_[i];
    if (x < acc) return static_cast<int>(i);
  }
  // Rounding left a sliver above the last cumulative value.
  for (std::size_t i = probs_.size(); i-- > 0;)
    if (probs_[i] > 0) return static_cast<int>(i);
  return size() - 1;
}

int Categorical::argmax() const {
  return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

}  // namespace lamarl::nn
