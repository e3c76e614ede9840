#pragma once

#include "lamarl/agents/team.hpp"
#include "lamarl/nn/optim.hpp"
#include "lamarl/train/losses.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <ostream>

namespace lamarl::train {

using agents::Hidden;
using agents::Team;
using agents::TokenSeq;

struct TrainConfig {
  int n_parallel_rollouts = 250;
  int ppo_epochs = 15;
  int n_minibatches = 1;
  Real lr = 5e-4;
  Real lang_lr = 7e-3;
  int lang_batch = 1024;
  long warmup_steps = 50000;
  Real warmup_lr_factor = 1e-2;
  Real clip_eps = 0.2;
  Real gamma = 0.99;
  Real gae_lambda = 0.95;
  Real entropy_coef = 0.01;
  Real value_clip = 0.2;
  Real max_grad_norm = 10.0;
  Real adam_eps = 1e-5;
  long total_env_steps = 2'000'000;
  /// Recurrent training windows: hidden states are restored every this many steps.
  int chunk_length = 10;
  int lang_buffer_size = 50000;
  bool dynamic_weighting = true;
  /// Plain signed cosine sum instead of the balanced contrastive weights.
  bool literal_clip = false;
  /// Oracle pairs used to pretrain the EC-LangGround target encoder.
  int langground_corpus = 20000;
  int langground_steps = 300;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// One environment step for the environments still running.
struct StepRecord {
  /// Environment indices alive at this step (a subsequence of the previous step's).
  std::vector<int> rows;
  std::vector<Matrix> obs;         // [agent] |rows| x obs_dim
  Matrix joint_obs;                // |rows| x n*obs_dim
  std::vector<Matrix> comm_input;  // [agent] communication-encoder input
  std::vector<std::vector<int>> actions;
  std::vector<std::vector<Real>> log_probs;
  std::vector<std::vector<Real>> values;
  std::vector<Real> rewards;
  std::vector<bool> dones;
  std::vector<std::vector<TokenSeq>> descriptions;  // [agent][row] oracle descriptions
  std::vector<Matrix> langground_targets;           // [agent] EC-LangGround only
  /// Hidden state before this step, stored at window starts.
  std::optional<Hidden> hidden;
  std::vector<std::vector<Real>> advantages;  // [agent][row]
  std::vector<std::vector<Real>> returns;     // [agent][row]
};

struct RolloutBuffer {
  int n_envs = 0;
  int n_agents = 0;
  int chunk_length = 10;
  std::vector<StepRecord> steps;
  std::vector<int> episode_lengths;
  std::vector<bool> episode_success;
  long message_count = 0;
  long message_tokens = 0;

  long total_steps() const;
  Real success_rate() const;
  Real mean_episode_length() const;
  Real mean_tokens_per_message() const;
};

/// Runs one episode in each environment with sampled actions and messages.
RolloutBuffer collect_rollouts(Team& team, std::vector<std::unique_ptr<lang::TaskEnv>>& envs, int chunk_length,
                               nn::Rng& rng);

/// Fills advantages/returns per agent and normalizes advantages over the buffer.
void compute_advantages(RolloutBuffer& buffer, Real gamma, Real lambda, bool normalize = true);

/// FIFO of (observation, description) pairs.
class LanguageBuffer {
 public:
  LanguageBuffer(int capacity, int obs_dim);
  void push(const Eigen::Ref<const Eigen::RowVectorXd>& obs, TokenSeq description);
  std::size_t size() const { return count_; }
  int capacity() const { return capacity_; }
  /// Uniform sample with replacement.
  std::pair<Matrix, std::vector<TokenSeq>> sample(std::size_t n, nn::Rng& rng) const;
  const TokenSeq& description(std::size_t i) const { return desc_[i]; }

 private:
  int capacity_;
  Matrix obs_;
  std::vector<TokenSeq> desc_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

struct LanguageBuffers {
  LanguageBuffer per_agent;
  LanguageBuffer joint;
};

/// Adds every stored (obs, description) pair and the joint pairs of a buffer.
void add_language_pairs(LanguageBuffers& lang, const RolloutBuffer& buffer, int eos, int pad);

/// Which losses a variant optimizes.
std::array<bool, kNumLossKinds> active_losses(const agents::VariantSpec& v);

/// Accumulated unweighted loss values of one pass.
struct LossTotals {
  std::vector<LossArray> per_agent;
};

/// Combined RL (+ grounding) loss of one training window, already divided by
/// `sample_count` and weighted by `weights`. Adds unweighted parts to `totals`.
Var window_loss(Tape& t, Team& team, const RolloutBuffer& buffer, std::size_t t0, std::span<const int> env_filter,
                const std::vector<LossWeights>& weights, const TrainConfig& cfg, Real sample_count,
                LossTotals* totals = nullptr);

/// Weighted captioning + CLIP loss of one agent on sampled language batches.
struct LanguageBatch {
  Matrix obs;
  std::vector<TokenSeq> descriptions;
  Matrix joint_obs;
  std::vector<TokenSeq> joint_descriptions;
};
Var language_loss(Tape& t, agents::AgentNet& agent, const LanguageBatch& batch, const LossWeights& weights,
                  bool literal_clip = false, LossArray* unweighted = nullptr);

struct Optimizers {
  std::vector<nn::Adam> control;
  std::vector<nn::Adam> language;
};
Optimizers make_optimizers(Team& team, const TrainConfig& cfg);

/// PPO epochs plus language losses; returns each agent's mean unweighted losses.
std::vector<LossArray> update(Team& team, RolloutBuffer& buffer, const LanguageBuffers* lang, const TrainConfig& cfg,
                              const std::vector<LossWeights>& weights, Optimizers& opt, Real control_lr_scale,
                              nn::Rng& rng);

struct IterationMetrics {
  int iteration = 0;
  long env_steps = 0;
  std::array<Real, kNumLossKinds> loss{};
  std::array<Real, kNumLossKinds> beta{};
  Real success_rate = 0;
  Real mean_episode_length = 0;
  Real mean_tokens_per_message = 0;
  Real lr_scale = 1;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const IterationMetrics& m);

class Trainer {
 public:
  Trainer(Team& team, lang::TaskEnvFactory factory, TrainConfig config, std::uint64_t seed);

  /// Collects one round of rollouts and updates every agent.
  IterationMetrics iterate();
  /// Iterates until the env-step budget is spent.
  void run(const std::function<void(const IterationMetrics&)>& on_iteration = {});

  long env_steps() const { return env_steps_; }
  int iteration() const { return iteration_; }
  const std::vector<LossWeights>& weights() const { return weights_; }
  const TrainConfig& config() const { return config_; }
  Real control_lr_scale() const;

 private:
  Team& team_;
  lang::TaskEnvFactory factory_;
  TrainConfig config_;
  nn::Rng rng_;
  std::vector<std::unique_ptr<lang::TaskEnv>> envs_;
  std::optional<LanguageBuffers> lang_;
  Optimizers opt_;
  std::vector<LossWeights> weights_;
  std::vector<LossArray> previous_;
  long env_steps_ = 0;
  int iteration_ = 0;
};

/// Pretrains and installs the frozen EC-LangGround encoder if the team needs one.
void ensure_langground_encoder(Team& team, const lang::TaskEnvFactory& factory, const TrainConfig& cfg,
                               std::uint64_t seed);

}  // namespace lamarl::train
