#pragma once

#include "lamarl/agents/agent_net.hpp"
#include "lamarl/lang/task_env.hpp"

#include <filesystem>
#include <memory>
#include <optional>

namespace lamarl::agents {

/// Recurrent state of every agent, batch-major (one row per environment).
struct Hidden {
  std::vector<Matrix> obs;
  std::vector<Matrix> joint;
  std::vector<Matrix> comm;

  Hidden rows(std::span<const int> index) const;
  void scatter(std::span<const int> index, const Hidden& part);
};

enum class Sampling { Sample, Greedy };

/// Per-agent message override for one batch row.
using Overrides = std::vector<std::vector<std::optional<TokenSeq>>>;  // [agent][row]

struct StepInput {
  /// Per agent, B x obs_dim.
  std::vector<Matrix> obs;
  /// Oracle descriptions [agent][row]; required by the Oracle variants.
  const std::vector<std::vector<TokenSeq>>* oracle = nullptr;
  /// Replaces the given agents' slots in the broadcast (token variants only).
  const Overrides* overrides = nullptr;
};

struct AgentStep {
  Matrix post_input_mlp;
  Matrix post_obs_encoder;
  /// Communication-policy output (B x C); empty when the variant has none.
  Matrix post_comm_policy;
  /// Input fed to the communication encoder this step.
  Matrix comm_input;
  Matrix action_probs;
  std::vector<int> actions;
  std::vector<Real> log_probs;
  std::vector<Real> values;
};

struct TeamStep {
  std::vector<AgentStep> agents;
  /// Token messages [agent][row] for token variants.
  std::vector<std::vector<TokenSeq>> messages;
  /// Broadcast [row]: agent messages joined in agent order (token variants).
  std::vector<TokenSeq> broadcast;
  /// Continuous payloads per agent (B x C) for EC variants.
  std::vector<Matrix> payloads;
  Matrix joint_obs;
};

/// The agents of one training run plus the shared variant wiring.
class Team {
 public:
  Team(const VariantSpec& variant, const ModelConfig& model, const TeamShape& shape, std::uint64_t seed);
  Team(const Team&) = delete;
  Team& operator=(const Team&) = delete;
  Team(Team&&) = default;
  Team& operator=(Team&&) = default;

  const VariantSpec& variant() const { return variant_; }
  const ModelConfig& model() const { return model_; }
  const TeamShape& shape() const { return shape_; }
  int n_agents() const { return shape_.n_agents; }

  Hidden initial_hidden(nn::Index batch) const;

  /// speak for every agent, broadcast, then act.
  TeamStep step(const StepInput& in, Hidden& hidden, Rng& rng, Sampling actions, Sampling messages);

  std::vector<ParamArray*> parameters();

  std::vector<AgentNet> agents;
  /// EC-LangGround only: frozen pretrained language encoder.
  std::optional<LanguageEncoder> langground_encoder;

 private:
  VariantSpec variant_;
  ModelConfig model_;
  TeamShape shape_;
};

/// Concatenates per-agent observation rows in agent order.
Matrix joint_observation(std::span<const Matrix> obs);

/// E^L on a single description.
Matrix embed_language(const AgentNet& agent, const TokenSeq& description);
/// E^V on joint observations (B x n*obs_dim), from a zero recurrent state.
Matrix embed_visual(const AgentNet& agent, const Matrix& joint_obs);
Var embed_visual(Tape& t, AgentNet& agent, const Var& joint_obs);
/// Communication context from single observations, from a zero recurrent state.
Var context_from_obs(Tape& t, AgentNet& agent, const Var& obs);

/// Writes all parameters plus the variant/model/shape needed to rebuild the team.
std::filesystem::path save_team(const std::filesystem::path& stem, Team& team,
                                const nlohmann::json& extra = nlohmann::json::object());
std::unique_ptr<Team> load_team(const std::filesystem::path& stem_or_manifest);
nlohmann::json read_team_metadata(const std::filesystem::path& stem_or_manifest);

struct LangGroundPretrainConfig {
  int steps = 300;
  int batch = 256;
  Real learning_rate = 1e-3;
  int visual_hidden = 64;
};

struct LangGroundModel {
  LanguageEncoder language;
  /// Throwaway observation encoder used only while pretraining.
  nn::LayerStack visual;
};

/// Trains a dim-`model.langground_dim` language encoder with the contrastive
/// objective against a throwaway visual encoder, then freezes the language side.
LangGroundModel pretrain_langground_encoder(std::span<const lang::CorpusPair> corpus, const TeamShape& shape,
                                            const ModelConfig& model, const LangGroundPretrainConfig& config,
                                            std::uint64_t seed);

/// Mean cosine similarity of matched pairs and of all mismatched pairs.
struct AlignmentScore {
  Real matched = 0;
  Real mismatched = 0;
};
AlignmentScore alignment(const LangGroundModel& model, std::span<const lang::CorpusPair> corpus);

}  // namespace lamarl::agents
