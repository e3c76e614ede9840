#pragma once

#include "lamarl/agents/team.hpp"
#include "lamarl/train/trainer.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace lamarl::eval {

using agents::Matrix;
using agents::Real;
using agents::Team;
using agents::TokenSeq;

/// Seed of episode `k` in an evaluation seeded with `seed` (splitmix64).
std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t k);

struct SuccessReport {
  long episodes = 0;
  Real success_rate = 0;
  Real mean_length = 0;
  Real mean_tokens_per_message = 0;
};

/// Runs `n_episodes` episodes (actions sampled, messages greedy). Episode k
/// starts from episode_seed(seed, k), so every team sees the same initial states.
SuccessReport evaluate_success(Team& team, const lang::TaskEnvFactory& factory, int n_episodes, std::uint64_t seed,
                               int batch = 250);

// ---- teaming -------------------------------------------------------------------

inline const std::vector<std::string>& composition_patterns() {
  static const std::vector<std::string> p{"AAAA", "AAAB", "AABB", "AABC", "ABCD"};
  return p;
}

/// Seat i of the pattern receives agent i of the team its letter names
/// ('A' = sources[0], ...). All sources must share variant, model and shape.
std::unique_ptr<Team> compose_team(const std::string& pattern, const std::vector<const Team*>& sources);

struct TeamingRow {
  std::string variant;
  std::string pattern;
  SuccessReport report;
};

std::vector<TeamingRow> zero_shot_eval(const std::vector<const Team*>& sources, const lang::TaskEnvFactory& factory,
                                       int n_episodes, std::uint64_t seed,
                                       const std::vector<std::string>& patterns = composition_patterns());

// ---- transfer ------------------------------------------------------------------

/// Continues training a (12x12) team on another environment; hidden states
/// start from zero because every rollout starts a fresh episode.
std::vector<train::IterationMetrics> transfer_run(Team& team, const lang::TaskEnvFactory& target,
                                                  const train::TrainConfig& cfg, std::uint64_t seed, int iterations);

// ---- embeddings ----------------------------------------------------------------

enum class Layer { PostInputMlp, PostObsEncoder, PostCommPolicy };
inline constexpr int kNumLayers = 3;
std::string_view to_string(Layer l);

struct EmbeddingRecord {
  Layer layer = Layer::PostInputMlp;
  int agent = 0;
  std::string label;
  std::vector<Real> vector;
};

/// Greedy rollouts of the team; every (agent, step) contributes one record per
/// layer labeled with the oracle description of that agent's observation,
/// until `n_observations` observations are collected.
std::vector<EmbeddingRecord> export_embeddings(Team& team, const lang::TaskEnvFactory& factory, int n_observations,
                                               std::uint64_t seed);

/// Mean silhouette coefficient (Euclidean). Points alone in their cluster score 0.
/// Throws std::invalid_argument with fewer than two labels or shape mismatches.
Real silhouette_score(const std::vector<std::vector<Real>>& points, const std::vector<std::string>& labels);

/// Silhouette of each embedding layer over the given records.
std::vector<std::pair<Layer, Real>> silhouette_by_layer(const std::vector<EmbeddingRecord>& records);

void write_embeddings_jsonl(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings_jsonl(const std::filesystem::path& path);

// ---- interaction ---------------------------------------------------------------

/// c(a) = p_message(a) / p_no_message(a) - 1.
Real action_change(Real p_message, Real p_no_message);

struct InteractionRow {
  std::string message;  // "" for the no-message baseline
  std::vector<Real> p_message;
  std::vector<Real> p_no_message;
  std::vector<Real> change;
};

inline const std::vector<std::string>& directional_messages() {
  static const std::vector<std::string> m{"Prey North", "Prey South", "Prey East", "Prey West"};
  return m;
}

/// Empty grid (preys removed), agents placed on a 6x6 sub-lattice, one step
/// from a fresh hidden state. Each message replaces the slots of every agent
/// but the probed one; the baseline keeps the team's own messages. Rows are
/// averaged over placements and probed agents. The last row is the baseline.
std::vector<InteractionRow> interaction_probe(Team& team, const env::GridConfig& config,
                                              const std::vector<std::string>& messages = directional_messages(),
                                              std::uint64_t seed = 0);

// ---- reports -------------------------------------------------------------------

void write_success_csv(std::ostream& out, const std::vector<std::pair<std::string, SuccessReport>>& rows);
void write_teaming_csv(std::ostream& out, const std::vector<TeamingRow>& rows);
void write_interaction_csv(std::ostream& out, const std::vector<InteractionRow>& rows);
void write_silhouette_csv(std::ostream& out, const std::vector<std::pair<Layer, Real>>& rows);

}  // namespace lamarl::eval
