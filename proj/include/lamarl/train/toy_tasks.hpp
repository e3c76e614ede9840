#pragma once

#include "lamarl/lang/task_env.hpp"

namespace lamarl::train {

/// Single agent on a 1 x length corridor starting at the left end; reaching the
/// right end pays +1 and ends the episode. Observation: one-hot position.
/// The oracle says "Goal" once the goal is within two cells.
class CorridorEnv final : public lang::TaskEnv {
 public:
  explicit CorridorEnv(int length = 5, int episode_limit = 10);

  int n_agents() const override { return 1; }
  int obs_dim() const override { return length_; }
  int n_actions() const override { return 5; }
  int episode_limit() const override { return limit_; }
  const lang::Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<lang::FlatObs> reset(std::uint64_t seed) override;
  lang::TaskStep step(std::span<const int> actions) override;
  bool done() const override { return done_; }
  lang::Description describe(int agent) const override;
  nlohmann::json snapshot() const override;
  std::unique_ptr<lang::TaskEnv> clone() const override { return std::make_unique<CorridorEnv>(*this); }

  int position() const { return pos_; }

 private:
  std::vector<lang::FlatObs> observe() const;
  int length_;
  int limit_;
  lang::Vocabulary vocab_;
  int pos_ = 0;
  int t_ = 0;
  bool done_ = false;
};

/// One-step task with a constant observation; only `rewarded_action` pays +1.
class BanditEnv final : public lang::TaskEnv {
 public:
  explicit BanditEnv(int n_agents = 1, int rewarded_action = 2);

  int n_agents() const override { return n_agents_; }
  int obs_dim() const override { return 2; }
  int n_actions() const override { return 5; }
  int episode_limit() const override { return 1; }
  const lang::Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<lang::FlatObs> reset(std::uint64_t seed) override;
  lang::TaskStep step(std::span<const int> actions) override;
  bool done() const override { return done_; }
  lang::Description describe(int agent) const override;
  nlohmann::json snapshot() const override;
  std::unique_ptr<lang::TaskEnv> clone() const override { return std::make_unique<BanditEnv>(*this); }

 private:
  int n_agents_;
  int rewarded_;
  lang::Vocabulary vocab_;
  bool done_ = false;
};

}  // namespace lamarl::train
