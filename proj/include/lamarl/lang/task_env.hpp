#pragma once

#include "lamarl/env/grid_world.hpp"
#include "lamarl/lang/oracle.hpp"
#include "lamarl/lang/vocabulary.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace lamarl::lang {

using FlatObs = std::vector<double>;

struct TaskStep {
  std::vector<FlatObs> observations;
  double reward = 0;
  bool done = false;
  bool success = false;
};

/// A multi-agent task paired with its language oracle. This is the surface the
/// trainer and evaluators drive; grid tasks and small test tasks implement it.
class TaskEnv {
 public:
  virtual ~TaskEnv() = default;

  virtual int n_agents() const = 0;
  virtual int obs_dim() const = 0;
  virtual int n_actions() const = 0;
  virtual int episode_limit() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;

  virtual std::vector<FlatObs> reset(std::uint64_t seed) = 0;
  virtual TaskStep step(std::span<const int> actions) = 0;
  virtual bool done() const = 0;
  /// Oracle description of agent `i`'s current observation.
  virtual Description describe(int agent) const = 0;
  virtual nlohmann::json snapshot() const = 0;
  virtual std::unique_ptr<TaskEnv> clone() const = 0;
};

using TaskEnvFactory = std::function<std::unique_ptr<TaskEnv>()>;

class GridTaskEnv final : public TaskEnv {
 public:
  explicit GridTaskEnv(env::GridConfig config);

  int n_agents() const override { return config_.n_agents; }
  int obs_dim() const override { return env::Observation::flat_dim(config_.task); }
  int n_actions() const override { return env::kNumActions; }
  int episode_limit() const override { return config_.episode_limit; }
  const Vocabulary& vocabulary() const override { return vocab_; }

  std::vector<FlatObs> reset(std::uint64_t seed) override;
  TaskStep step(std::span<const int> actions) override;
  bool done() const override { return state_.done; }
  Description describe(int agent) const override;
  nlohmann::json snapshot() const override;
  std::unique_ptr<TaskEnv> clone() const override;

  const env::GridState& state() const { return state_; }
  env::GridState& state() { return state_; }
  const env::GridConfig& config() const { return config_; }

 private:
  env::GridConfig config_;
  Vocabulary vocab_;
  env::GridState state_;
};

TaskEnvFactory grid_factory(const env::GridConfig& config);

// ---- corpus ----------------------------------------------------------------

struct CorpusPair {
  FlatObs obs;
  Description description;
};

enum class CorpusKind { PerAgent, Joint };

/// Maps the current per-agent observations to one action per agent.
using RolloutPolicy = std::function<std::vector<int>(const std::vector<FlatObs>&, std::mt19937_64&)>;

RolloutPolicy uniform_random_policy(int n_actions);

/// Rolls out `policy` and pairs observations with oracle descriptions until
/// `n_pairs` pairs exist. Joint pairs concatenate the agents' observations and
/// join their descriptions in agent order (see join_messages).
std::vector<CorpusPair> corpus_generate(TaskEnv& env, const RolloutPolicy& policy, std::size_t n_pairs,
                                        std::uint64_t seed, CorpusKind kind = CorpusKind::PerAgent);

/// One {"obs": [...], "tokens": [...]} record per line, after a schema header line.
void write_corpus_jsonl(const std::filesystem::path& path, std::span<const CorpusPair> pairs);
std::vector<CorpusPair> read_corpus_jsonl(const std::filesystem::path& path);

}  // namespace lamarl::lang
