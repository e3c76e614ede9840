#include "lamarl/agents/agent_net.hpp"

#include "lamarl/nn/categorical.hpp"
#include "lamarl/nn/ops.hpp"

#include <limits>
#include <stdexcept>

namespace lamarl::agents {

using nlohmann::json;
using nn::Index;
using nn::Activation;
using nn::LayerKind;
using nn::LayerSpec;

json to_json(const ModelConfig& c) {
  return {{"hidden_dim", c.hidden_dim},
          {"token_embed_dim", c.token_embed_dim},
          {"max_message_length", c.max_message_length},
          {"langground_dim", c.langground_dim}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.token_embed_dim = j.value("token_embed_dim", c.token_embed_dim);
  c.max_message_length = j.value("max_message_length", c.max_message_length);
  c.langground_dim = j.value("langground_dim", c.langground_dim);
  if (c.hidden_dim < 1 || c.token_embed_dim < 1 || c.max_message_length < 1 || c.langground_dim < 1)
    throw std::invalid_argument("model config: dimensions must be positive");
  return c;
}

// ---- language encoder ------------------------------------------------------

LanguageEncoder::LanguageEncoder(const std::string& name, int vocab_size, int embed_dim, int out_dim, Rng& rng)
    : embed(name + "/embed", vocab_size, embed_dim, rng), gru(name + "/gru", embed_dim, out_dim, rng) {}

namespace {

std::size_t longest(const std::vector<TokenSeq>& seqs) {
  std::size_t n = 0;
  for (const auto& s : seqs) n = std::max(n, s.size());
  return n;
}

// Token ids at position k (0 for exhausted rows) and the mask of live rows.
std::pair<std::vector<int>, Matrix> column_at(const std::vector<TokenSeq>& seqs, std::size_t k) {
  std::vector<int> ids(seqs.size(), 0);
  Matrix mask(static_cast<Index>(seqs.size()), 1);
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    const bool live = k < seqs[r].size();
    ids[r] = live ? seqs[r][k] : 0;
    mask(static_cast<Index>(r), 0) = live ? 1.0 : 0.0;
  }
  return {ids, mask};
}

}  // namespace

Matrix LanguageEncoder::encode(const std::vector<TokenSeq>& seqs) const {
  Matrix h = Matrix::Zero(static_cast<Index>(seqs.size()), dim());
  const std::size_t n = longest(seqs);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [ids, mask] = column_at(seqs, k);
    const Matrix next = gru.forward(embed.forward(ids), h);
    for (Index r = 0; r < h.rows(); ++r)
      if (mask(r, 0) > 0) h.row(r) = next.row(r);
  }
  return h;
}

Var LanguageEncoder::encode(Tape& t, const std::vector<TokenSeq>& seqs) {
  Var h = t.constant(Matrix::Zero(static_cast<Index>(seqs.size()), dim()));
  const std::size_t n = longest(seqs);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [ids, mask] = column_at(seqs, k);
    const Var next = gru.forward(t, embed.forward(t, ids), h);
    h = mask.minCoeff() > 0 ? next : nn::blend(mask, next, h);
  }
  return h;
}

void LanguageEncoder::collect(std::vector<ParamArray*>& out) {
  embed.collect(out);
  gru.collect(out);
}

void LanguageEncoder::set_frozen(bool frozen) {
  std::vector<ParamArray*> ps;
  collect(ps);
  for (ParamArray* p : ps) p->frozen = frozen;
}

// ---- decoder ---------------------------------------------------------------

Decoder::Decoder(const std::string& name, int context_dim, int hidden_dim, int vocab_size, int embed_dim, Rng& rng)
    : init(name + "/init", context_dim, hidden_dim, Activation::Tanh, rng),
      embed(name + "/embed", vocab_size, embed_dim, rng),
      gru(name + "/gru", embed_dim, hidden_dim, rng),
      out(name + "/out", hidden_dim, vocab_size, Activation::None, rng) {}

std::vector<TokenSeq> Decoder::generate(const Matrix& context, int max_length, Rng* rng, bool greedy) const {
  if (!greedy && rng == nullptr) throw std::invalid_argument("Decoder::generate: sampling needs an rng");
  if (max_length < 1) throw std::invalid_argument("Decoder::generate: max_length must be >= 1");
  const Index B = context.rows();
  std::vector<TokenSeq> msgs(static_cast<std::size_t>(B));
  std::vector<bool> finished(static_cast<std::size_t>(B), false);
  std::vector<int> prev(static_cast<std::size_t>(B), pad());
  Matrix h = init.forward(context);
  for (int k = 0; k < max_length; ++k) {
    h = gru.forward(embed.forward(prev), h);
    Matrix logits = out.forward(h);
    bool any = false;
    for (Index r = 0; r < B; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      if (finished[ur]) continue;
      int tok = eos();
      if (k + 1 < max_length) {
        logits(r, pad()) = -std::numeric_limits<Real>::infinity();
        const nn::Categorical dist(Eigen::RowVectorXd(logits.row(r)));
        tok = greedy ? dist.argmax() : dist.sample(*rng);
      }
      msgs[ur].push_back(tok);
      prev[ur] = tok;
      if (tok == eos()) finished[ur] = true;
      any = any || !finished[ur];
    }
    if (!any) break;
  }
  return msgs;
}

namespace {

// Teacher-forcing layout: inputs start with PAD, targets are the sequence.
struct Forcing {
  std::vector<std::vector<int>> inputs;   // per step, per row
  std::vector<std::vector<int>> targets;  // per step, per row
  std::vector<Matrix> masks;              // per step, Bx1
};

Forcing forcing(const std::vector<TokenSeq>& targets, int pad) {
  Forcing f;
  const std::size_t n = longest(targets);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<int> in(targets.size()), tg(targets.size());
    Matrix m(static_cast<Index>(targets.size()), 1);
    for (std::size_t r = 0; r < targets.size(); ++r) {
      const bool live = k < targets[r].size();
      in[r] = k == 0 ? pad : (live ? targets[r][k - 1] : pad);
      tg[r] = live ? targets[r][k] : 0;
      m(static_cast<Index>(r), 0) = live ? 1.0 : 0.0;
    }
    f.inputs.push_back(std::move(in));
    f.targets.push_back(std::move(tg));
    f.masks.push_back(std::move(m));
  }
  return f;
}

}  // namespace

Var Decoder::caption_loss(Tape& t, const Var& context, const std::vector<TokenSeq>& targets) {
  if (static_cast<Index>(targets.size()) != context.rows())
    throw std::invalid_argument("caption_loss: one target per context row required");
  if (targets.empty()) throw std::invalid_argument("caption_loss: empty batch");
  const Forcing f = forcing(targets, pad());
  Var h = init.forward(t, context);
  Var total;
  for (std::size_t k = 0; k < f.inputs.size(); ++k) {
    h = gru.forward(t, embed.forward(t, f.inputs[k]), h);
    const Var lp = nn::pick(nn::log_softmax_rows(out.forward(t, h)), f.targets[k]);
    const Var masked = nn::mul(lp, t.constant(f.masks[k]));
    total = total.valid() ? nn::add(total, nn::sum(masked)) : nn::sum(masked);
  }
  return nn::scale(total, -1.0 / static_cast<Real>(targets.size()));
}

std::pair<long, long> Decoder::token_accuracy(const Matrix& context, const std::vector<TokenSeq>& targets) const {
  const Forcing f = forcing(targets, pad());
  Matrix h = init.forward(context);
  long correct = 0, total = 0;
  for (std::size_t k = 0; k < f.inputs.size(); ++k) {
    h = gru.forward(embed.forward(f.inputs[k]), h);
    const Matrix logits = out.forward(h);
    for (Index r = 0; r < logits.rows(); ++r) {
      if (f.masks[k](r, 0) == 0) continue;
      Index best = 0;
      logits.row(r).maxCoeff(&best);
      correct += best == f.targets[k][static_cast<std::size_t>(r)] ? 1 : 0;
      ++total;
    }
  }
  return {correct, total};
}

void Decoder::collect(std::vector<ParamArray*>& o) {
  init.collect(o);
  embed.collect(o);
  gru.collect(o);
  out.collect(o);
}

// ---- agent -----------------------------------------------------------------

int comm_input_dim(const VariantSpec& v, const ModelConfig& m, const TeamShape& s) {
  switch (v.comm) {
    case CommStrategy::LearnedLanguage:
    case CommStrategy::Oracle: return m.hidden_dim;
    case CommStrategy::ContinuousEC: return s.n_agents * v.context_dim();
    case CommStrategy::RawObservations: return s.n_agents * s.obs_dim;
    case CommStrategy::None: return 1;
  }
  return 1;
}

namespace {

nn::LayerStack mlp(const std::string& name, std::initializer_list<int> dims, Activation hidden_act, Activation last_act,
                   Rng& rng) {
  std::vector<LayerSpec> specs;
  const std::vector<int> d(dims);
  for (std::size_t i = 0; i + 1 < d.size(); ++i)
    specs.push_back({LayerKind::Dense, d[i], d[i + 1], i + 2 == d.size() ? last_act : hidden_act});
  return nn::LayerStack(name, specs, rng);
}

}  // namespace

AgentNet::AgentNet(int idx, const VariantSpec& v, const ModelConfig& m, const TeamShape& s, Rng& rng) : index(idx) {
  const std::string p = "agent" + std::to_string(idx) + "/";
  const int H = m.hidden_dim;
  const int C = v.context_dim();
  input_mlp = nn::Dense(p + "input_mlp", s.obs_dim, H, Activation::Relu, rng);
  obs_encoder = nn::GRUCell(p + "obs_encoder", H, H, rng);
  joint_input_mlp = nn::Dense(p + "joint_input_mlp", s.n_agents * s.obs_dim, H, Activation::Relu, rng);
  joint_obs_encoder = nn::GRUCell(p + "joint_obs_encoder", H, H, rng);
  comm_policy = mlp(p + "comm_policy", {H, H, C}, Activation::Relu, Activation::None, rng);
  decoder = Decoder(p + "decoder", C, H, s.vocab_size, m.token_embed_dim, rng);
  language_encoder = LanguageEncoder(p + "language_encoder", s.vocab_size, m.token_embed_dim, H, rng);
  visual_encoder = mlp(p + "visual_encoder", {H, H, H}, Activation::Relu, Activation::None, rng);
  comm_encoder = nn::GRUCell(p + "comm_encoder", agents::comm_input_dim(v, m, s), H, rng);
  action_head = mlp(p + "action_head", {2 * H, H, H, s.n_actions}, Activation::Relu, Activation::None, rng);
  value_head = mlp(p + "value_head", {2 * H, H, H, 1}, Activation::Relu, Activation::None, rng);
  if (v.grounding == Grounding::AutoEncoder)
    reconstructor = mlp(p + "reconstructor", {C, H, s.obs_dim}, Activation::Relu, Activation::None, rng);
}

std::vector<ParamArray*> AgentNet::language_parameters() {
  std::vector<ParamArray*> out;
  decoder.collect(out);
  language_encoder.collect(out);
  visual_encoder.collect(out);
  return out;
}

std::vector<ParamArray*> AgentNet::control_parameters() {
  std::vector<ParamArray*> out;
  input_mlp.collect(out);
  obs_encoder.collect(out);
  joint_input_mlp.collect(out);
  joint_obs_encoder.collect(out);
  comm_policy.collect(out);
  comm_encoder.collect(out);
  action_head.collect(out);
  value_head.collect(out);
  if (reconstructor) reconstructor->collect(out);
  return out;
}

std::vector<ParamArray*> AgentNet::parameters() {
  std::vector<ParamArray*> out = control_parameters();
  const auto lang = language_parameters();
  out.insert(out.end(), lang.begin(), lang.end());
  return out;
}

}  // namespace lamarl::agents
