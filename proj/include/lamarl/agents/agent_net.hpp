#pragma once

#include "lamarl/agents/variant.hpp"
#include "lamarl/nn/layers.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <vector>

namespace lamarl::agents {

using nn::Matrix;
using nn::ParamArray;
using nn::Real;
using nn::Rng;
using nn::Tape;
using nn::Var;
using TokenSeq = std::vector<int>;

struct ModelConfig {
  int hidden_dim = 128;
  int token_embed_dim = 4;
  /// Longest message, EOS included.
  int max_message_length = 8;
  int langground_dim = 4;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TeamShape {
  int n_agents = 1;
  int obs_dim = 1;
  int n_actions = 5;
  /// Symbols including EOS (= size - 2) and PAD (= size - 1).
  int vocab_size = 3;
  int eos() const { return vocab_size - 2; }
  int pad() const { return vocab_size - 1; }
  bool operator==(const TeamShape&) const = default;
};

/// Token embedding followed by a GRU; the final hidden state is the encoding.
class LanguageEncoder {
 public:
  LanguageEncoder() = default;
  LanguageEncoder(const std::string& name, int vocab_size, int embed_dim, int out_dim, Rng& rng);

  /// Sequences are read up to and including their EOS; rows may differ in length.
  Matrix encode(const std::vector<TokenSeq>& seqs) const;
  Var encode(Tape& t, const std::vector<TokenSeq>& seqs);

  void collect(std::vector<ParamArray*>& out);
  void set_frozen(bool frozen);
  int dim() const { return gru.hidden_dim(); }

  nn::Embedding embed;
  nn::GRUCell gru;
};

/// Autoregressive message decoder conditioned on the communication context.
class Decoder {
 public:
  Decoder() = default;
  Decoder(const std::string& name, int context_dim, int hidden_dim, int vocab_size, int embed_dim, Rng& rng);

  /// Emits tokens until EOS or `max_length` symbols (the last forced to EOS).
  /// PAD is the start symbol and is never emitted. `rng` may be null when greedy.
  std::vector<TokenSeq> generate(const Matrix& context, int max_length, Rng* rng, bool greedy) const;

  /// Teacher-forced cross-entropy summed over each target's tokens (EOS
  /// included), averaged over the batch.
  Var caption_loss(Tape& t, const Var& context, const std::vector<TokenSeq>& targets);

  /// Teacher-forced greedy predictions: (correct tokens, total tokens).
  std::pair<long, long> token_accuracy(const Matrix& context, const std::vector<TokenSeq>& targets) const;

  void collect(std::vector<ParamArray*>& out);
  int vocab_size() const { return out.output_dim(); }
  int eos() const { return vocab_size() - 2; }
  int pad() const { return vocab_size() - 1; }

  nn::Dense init;
  nn::Embedding embed;
  nn::GRUCell gru;
  nn::Dense out;
};

/// One agent's networks. Nothing is shared between agents.
class AgentNet {
 public:
  AgentNet() = default;
  AgentNet(int index, const VariantSpec& variant, const ModelConfig& model, const TeamShape& shape, Rng& rng);

  int index = 0;

  nn::Dense input_mlp;
  nn::GRUCell obs_encoder;
  nn::Dense joint_input_mlp;
  nn::GRUCell joint_obs_encoder;
  nn::LayerStack comm_policy;
  Decoder decoder;
  LanguageEncoder language_encoder;
  nn::LayerStack visual_encoder;
  nn::GRUCell comm_encoder;
  nn::LayerStack action_head;
  nn::LayerStack value_head;
  /// EC-AutoEncoder only: message -> observation.
  std::optional<nn::LayerStack> reconstructor;

  std::vector<ParamArray*> parameters();
  /// Decoder, language encoder and visual encoder.
  std::vector<ParamArray*> language_parameters();
  /// Everything outside language_parameters().
  std::vector<ParamArray*> control_parameters();
  int comm_input_dim() const { return comm_encoder.input_dim(); }
};

/// Input width of the communication encoder for a variant.
int comm_input_dim(const VariantSpec& variant, const ModelConfig& model, const TeamShape& shape);

}  // namespace lamarl::agents
