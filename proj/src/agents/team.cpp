#include "lamarl/agents/team.hpp"

#include "lamarl/nn/categorical.hpp"
#include "lamarl/nn/checkpoint.hpp"
#include "lamarl/nn/optim.hpp"
#include "lamarl/train/losses.hpp"

#include <stdexcept>

namespace lamarl::agents {

using nlohmann::json;
using nn::Index;

namespace {

Matrix gather_rows(const Matrix& m, std::span<const int> index) {
  Matrix out(static_cast<Index>(index.size()), m.cols());
  for (std::size_t r = 0; r < index.size(); ++r) out.row(static_cast<Index>(r)) = m.row(index[r]);
  return out;
}

void scatter_rows(Matrix& m, std::span<const int> index, const Matrix& part) {
  for (std::size_t r = 0; r < index.size(); ++r) m.row(index[r]) = part.row(static_cast<Index>(r));
}

TokenSeq join(const std::vector<const TokenSeq*>& msgs, int eos, int pad) {
  TokenSeq out;
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (i > 0) out.push_back(pad);
    for (int t : *msgs[i]) {
      if (t == eos) break;
      out.push_back(t);
    }
  }
  out.push_back(eos);
  return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

Hidden Hidden::rows(std::span<const int> index) const {
  Hidden h;
  for (const auto& m : obs) h.obs.push_back(gather_rows(m, index));
  for (const auto& m : joint) h.joint.push_back(gather_rows(m, index));
  for (const auto& m : comm) h.comm.push_back(gather_rows(m, index));
  return h;
}

void Hidden::scatter(std::span<const int> index, const Hidden& part) {
  for (std::size_t i = 0; i < obs.size(); ++i) {
    scatter_rows(obs[i], index, part.obs[i]);
    scatter_rows(joint[i], index, part.joint[i]);
    scatter_rows(comm[i], index, part.comm[i]);
  }
}

Team::Team(const VariantSpec& variant, const ModelConfig& model, const TeamShape& shape, std::uint64_t seed)
    : variant_(variant), model_(model), shape_(shape) {
  if (shape.n_agents < 1 || shape.obs_dim < 1 || shape.n_actions < 1 || shape.vocab_size < 3)
    throw std::invalid_argument("Team: invalid shape");
  Rng rng(seed);
  agents.reserve(static_cast<std::size_t>(shape.n_agents));
  for (int i = 0; i < shape.n_agents; ++i) agents.emplace_back(i, variant, model, shape, rng);
}

Hidden Team::initial_hidden(Index batch) const {
  Hidden h;
  for (int i = 0; i < shape_.n_agents; ++i) {
    h.obs.push_back(Matrix::Zero(batch, model_.hidden_dim));
    h.joint.push_back(Matrix::Zero(batch, model_.hidden_dim));
    h.comm.push_back(Matrix::Zero(batch, model_.hidden_dim));
  }
  return h;
}

std::vector<ParamArray*> Team::parameters() {
  std::vector<ParamArray*> out;
  for (auto& a : agents) {
    const auto ps = a.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  if (langground_encoder) langground_encoder->collect(out);
  return out;
}

Matrix joint_observation(std::span<const Matrix> obs) {
  if (obs.empty()) throw std::invalid_argument("joint_observation: no agents");
  Index cols = 0;
  for (const auto& o : obs) {
    if (o.rows() != obs[0].rows()) throw std::invalid_argument("joint_observation: row mismatch");
    cols += o.cols();
  }
  Matrix out(obs[0].rows(), cols);
  Index c = 0;
  for (const auto& o : obs) {
    out.middleCols(c, o.cols()) = o;
    c += o.cols();
  }
  return out;
}

TeamStep Team::step(const StepInput& in, Hidden& h, Rng& rng, Sampling act_mode, Sampling msg_mode) {
  const int n = shape_.n_agents;
  if (static_cast<int>(in.obs.size()) != n) throw std::invalid_argument("Team::step: one observation per agent");
  const Index B = in.obs[0].rows();
  for (const auto& o : in.obs)
    if (o.rows() != B || o.cols() != shape_.obs_dim) throw std::invalid_argument("Team::step: observation shape");
  if (in.overrides && !variant_.uses_tokens())
    throw std::invalid_argument("Team::step: message injection needs a token variant, got '" + variant_.name + "'");
  if (variant_.comm == CommStrategy::Oracle && in.oracle == nullptr)
    throw std::invalid_argument("Team::step: oracle descriptions required by '" + variant_.name + "'");

  TeamStep out;
  out.agents.resize(static_cast<std::size_t>(n));
  out.joint_obs = joint_observation(in.obs);

  for (int i = 0; i < n; ++i) {
    AgentNet& a = agents[static_cast<std::size_t>(i)];
    AgentStep& s = out.agents[static_cast<std::size_t>(i)];
    const auto ui = static_cast<std::size_t>(i);
    s.post_input_mlp = a.input_mlp.forward(in.obs[ui]);
    h.obs[ui] = a.obs_encoder.forward(s.post_input_mlp, h.obs[ui]);
    s.post_obs_encoder = h.obs[ui];
    h.joint[ui] = a.joint_obs_encoder.forward(a.joint_input_mlp.forward(out.joint_obs), h.joint[ui]);
    s.post_comm_policy = a.comm_policy.forward(h.obs[ui]).output;
  }

  // Speak.
  if (variant_.uses_tokens()) {
    out.messages.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      if (variant_.comm == CommStrategy::LearnedLanguage) {
        out.messages[ui] = agents[ui].decoder.generate(out.agents[ui].post_comm_policy, model_.max_message_length,
                                                      &rng, msg_mode == Sampling::Greedy);
      } else {
        if (in.oracle->size() <= ui)
          throw std::invalid_argument("Team::step: oracle descriptions for every agent required");
        out.messages[ui] = (*in.oracle)[ui];
        if (static_cast<Index>(out.messages[ui].size()) != B)
          throw std::invalid_argument("Team::step: one oracle description per row required");
      }
      if (in.overrides && ui < in.overrides->size()) {
        const auto& ov = (*in.overrides)[ui];
        for (std::size_t r = 0; r < ov.size() && r < static_cast<std::size_t>(B); ++r)
          if (ov[r]) out.messages[ui][r] = *ov[r];
      }
    }
    out.broadcast.resize(static_cast<std::size_t>(B));
    for (Index r = 0; r < B; ++r) {
      std::vector<const TokenSeq*> row;
      for (int i = 0; i < n; ++i) row.push_back(&out.messages[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)]);
      out.broadcast[static_cast<std::size_t>(r)] = join(row, shape_.eos(), shape_.pad());
    }
  } else if (variant_.comm == CommStrategy::ContinuousEC) {
    for (int i = 0; i < n; ++i) out.payloads.push_back(out.agents[static_cast<std::size_t>(i)].post_comm_policy);
  }

  // Listen and act.
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    AgentNet& a = agents[ui];
    AgentStep& s = out.agents[ui];
    switch (variant_.comm) {
      case CommStrategy::LearnedLanguage:
      case CommStrategy::Oracle: s.comm_input = a.language_encoder.encode(out.broadcast); break;
      case CommStrategy::ContinuousEC: s.comm_input = joint_observation(out.payloads); break;
      case CommStrategy::RawObservations: s.comm_input = out.joint_obs; break;
      case CommStrategy::None: s.comm_input = Matrix::Zero(B, 1); break;
    }
    h.comm[ui] = a.comm_encoder.forward(s.comm_input, h.comm[ui]);
    const Matrix logits = a.action_head.forward(hcat(h.obs[ui], h.comm[ui])).output;
    s.action_probs = nn::softmax_rows(logits);
    const Matrix values = a.value_head.forward(hcat(h.joint[ui], h.comm[ui])).output;
    s.actions.resize(static_cast<std::size_t>(B));
    s.log_probs.resize(static_cast<std::size_t>(B));
    s.values.resize(static_cast<std::size_t>(B));
    for (Index r = 0; r < B; ++r) {
      const nn::Categorical dist(Eigen::RowVectorXd(logits.row(r)));
      const int act = act_mode == Sampling::Greedy ? dist.argmax() : dist.sample(rng);
      const auto ur = static_cast<std::size_t>(r);
      s.actions[ur] = act;
      s.log_probs[ur] = dist.log_prob(act);
      s.values[ur] = values(r, 0);
    }
  }
  return out;
}

Matrix embed_language(const AgentNet& agent, const TokenSeq& description) {
  return agent.language_encoder.encode(std::vector<TokenSeq>{description});
}

Matrix embed_visual(const AgentNet& agent, const Matrix& joint_obs) {
  const Matrix x = agent.joint_input_mlp.forward(joint_obs);
  const Matrix h = agent.joint_obs_encoder.forward(x, Matrix::Zero(joint_obs.rows(), agent.joint_obs_encoder.hidden_dim()));
  return agent.visual_encoder.forward(h).output;
}

Var embed_visual(Tape& t, AgentNet& agent, const Var& joint_obs) {
  const Var x = agent.joint_input_mlp.forward(t, joint_obs);
  const Var h0 = t.constant(Matrix::Zero(joint_obs.rows(), agent.joint_obs_encoder.hidden_dim()));
  return agent.visual_encoder.forward(t, agent.joint_obs_encoder.forward(t, x, h0)).output;
}

Var context_from_obs(Tape& t, AgentNet& agent, const Var& obs) {
  const Var x = agent.input_mlp.forward(t, obs);
  const Var h0 = t.constant(Matrix::Zero(obs.rows(), agent.obs_encoder.hidden_dim()));
  return agent.comm_policy.forward(t, agent.obs_encoder.forward(t, x, h0)).output;
}

// ---- persistence -----------------------------------------------------------

namespace {

json shape_json(const TeamShape& s) {
  return {{"n_agents", s.n_agents}, {"obs_dim", s.obs_dim}, {"n_actions", s.n_actions}, {"vocab_size", s.vocab_size}};
}

TeamShape shape_from_json(const json& j) {
  return {j.at("n_agents").get<int>(), j.at("obs_dim").get<int>(), j.at("n_actions").get<int>(),
          j.at("vocab_size").get<int>()};
}

}  // namespace

std::filesystem::path save_team(const std::filesystem::path& stem, Team& team, const json& extra) {
  json meta = extra;
  meta["kind"] = "lamarl-team";
  meta["variant"] = team.variant().name;
  meta["model"] = to_json(team.model());
  meta["shape"] = shape_json(team.shape());
  meta["langground"] = team.langground_encoder.has_value();
  const auto ps = team.parameters();
  return nn::save_checkpoint(stem, std::vector<const ParamArray*>(ps.begin(), ps.end()), meta);
}

json read_team_metadata(const std::filesystem::path& stem_or_manifest) {
  const json meta = nn::read_manifest(nn::manifest_path_for(stem_or_manifest)).metadata;
  if (meta.value("kind", "") != "lamarl-team")
    throw std::runtime_error("not a team checkpoint: " + stem_or_manifest.string());
  return meta;
}

std::unique_ptr<Team> load_team(const std::filesystem::path& stem_or_manifest) {
  const auto manifest = nn::manifest_path_for(stem_or_manifest);
  const json meta = read_team_metadata(manifest);
  const VariantSpec& v = variant_from_name(meta.at("variant").get<std::string>());
  const ModelConfig model = model_config_from_json(meta.at("model"));
  const TeamShape shape = shape_from_json(meta.at("shape"));
  auto team = std::make_unique<Team>(v, model, shape, 0);
  if (meta.value("langground", false)) {
    Rng rng(0);
    team->langground_encoder.emplace("langground", shape.vocab_size, model.token_embed_dim, model.langground_dim, rng);
  }
  nn::load_checkpoint(manifest, team->parameters());
  if (team->langground_encoder) team->langground_encoder->set_frozen(true);
  return team;
}

// ---- language grounding pretraining -----------------------------------------

LangGroundModel pretrain_langground_encoder(std::span<const lang::CorpusPair> corpus, const TeamShape& shape,
                                            const ModelConfig& model, const LangGroundPretrainConfig& cfg,
                                            std::uint64_t seed) {
  if (corpus.empty()) throw std::invalid_argument("pretrain_langground_encoder: empty corpus");
  Rng rng(seed);
  LangGroundModel m;
  m.language = LanguageEncoder("langground", shape.vocab_size, model.token_embed_dim, model.langground_dim, rng);
  const nn::LayerSpec specs[] = {{nn::LayerKind::Dense, shape.obs_dim, cfg.visual_hidden, nn::Activation::Relu},
                                 {nn::LayerKind::Dense, cfg.visual_hidden, model.langground_dim}};
  m.visual = nn::LayerStack("langground_visual", specs, rng);
  std::vector<ParamArray*> ps;
  m.language.collect(ps);
  m.visual.collect(ps);
  nn::Adam opt(ps, cfg.learning_rate);
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), corpus.size());
  for (int step = 0; step < cfg.steps; ++step) {
    Matrix obs(static_cast<Index>(batch), shape.obs_dim);
    std::vector<TokenSeq> desc(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& p = corpus[pick(rng)];
      obs.row(static_cast<Index>(b)) = Eigen::Map<const Eigen::RowVectorXd>(p.obs.data(), static_cast<Index>(p.obs.size()));
      desc[b] = p.description.tokens;
    }
    Tape t;
    const Var loss = train::weighted_clip_loss(m.visual.forward(t, t.constant(obs)).output, m.language.encode(t, desc),
                                               train::contrastive_pair_weights(desc));
    t.backward(loss);
    nn::clip_grad_norm(ps, 10.0);
    opt.step();
  }
  m.language.set_frozen(true);
  return m;
}

AlignmentScore alignment(const LangGroundModel& m, std::span<const lang::CorpusPair> corpus) {
  if (corpus.empty()) throw std::invalid_argument("alignment: empty corpus");
  const Index n = static_cast<Index>(corpus.size());
  Matrix obs(n, static_cast<Index>(corpus[0].obs.size()));
  std::vector<TokenSeq> desc;
  for (Index i = 0; i < n; ++i) {
    const auto& p = corpus[static_cast<std::size_t>(i)];
    obs.row(i) = Eigen::Map<const Eigen::RowVectorXd>(p.obs.data(), static_cast<Index>(p.obs.size()));
    desc.push_back(p.description.tokens);
  }
  Matrix v = m.visual.forward(obs).output;
  Matrix l = m.language.encode(desc);
  v.rowwise().normalize();
  l.rowwise().normalize();
  const Matrix cos = v * l.transpose();
  AlignmentScore s;
  Real mism = 0;
  long count = 0;
  for (Index j = 0; j < n; ++j) {
    s.matched += cos(j, j);
    for (Index k = 0; k < n; ++k) {
      if (desc[static_cast<std::size_t>(j)] == desc[static_cast<std::size_t>(k)]) continue;
      mism += cos(j, k);
      ++count;
    }
  }
  s.matched /= static_cast<Real>(n);
  s.mismatched = count > 0 ? mism / static_cast<Real>(count) : 0.0;
  return s;
}

}  // namespace lamarl::agents
