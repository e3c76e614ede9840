#include "lamarl/train/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace lamarl::train {

using agents::AgentNet;
using agents::CommStrategy;
using agents::Grounding;
using nlohmann::json;
using nn::Index;

// ---- config ----------------------------------------------------------------

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  positive(n_parallel_rollouts > 0, "n_parallel_rollouts must be positive");
  positive(ppo_epochs > 0, "ppo_epochs must be positive");
  positive(n_minibatches > 0, "n_minibatches must be positive");
  positive(lr > 0 && lang_lr > 0, "learning rates must be positive");
  positive(lang_batch > 0, "lang_batch must be positive");
  positive(warmup_steps >= 0, "warmup_steps must be >= 0");
  positive(warmup_lr_factor > 0, "warmup_lr_factor must be positive");
  positive(clip_eps > 0 && clip_eps < 1, "clip_eps must lie in (0, 1)");
  positive(gamma >= 0 && gamma < 1, "gamma must lie in [0, 1)");
  positive(gae_lambda >= 0 && gae_lambda <= 1, "gae_lambda must lie in [0, 1]");
  positive(entropy_coef >= 0, "entropy_coef must be >= 0");
  positive(value_clip > 0, "value_clip must be positive");
  positive(max_grad_norm > 0, "max_grad_norm must be positive");
  positive(adam_eps > 0, "adam_eps must be positive");
  positive(total_env_steps > 0, "total_env_steps must be positive");
  positive(chunk_length > 0, "chunk_length must be positive");
  positive(lang_buffer_size > 0, "lang_buffer_size must be positive");
  positive(langground_corpus > 0 && langground_steps > 0, "langground pretraining sizes must be positive");
}

json to_json(const TrainConfig& c) {
  return {{"n_parallel_rollouts", c.n_parallel_rollouts},
          {"ppo_epochs", c.ppo_epochs},
          {"n_minibatches", c.n_minibatches},
          {"lr", c.lr},
          {"lang_lr", c.lang_lr},
          {"lang_batch", c.lang_batch},
          {"warmup_steps", c.warmup_steps},
          {"warmup_lr_factor", c.warmup_lr_factor},
          {"clip_eps", c.clip_eps},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"entropy_coef", c.entropy_coef},
          {"value_clip", c.value_clip},
          {"max_grad_norm", c.max_grad_norm},
          {"adam_eps", c.adam_eps},
          {"total_env_steps", c.total_env_steps},
          {"chunk_length", c.chunk_length},
          {"lang_buffer_size", c.lang_buffer_size},
          {"dynamic_weighting", c.dynamic_weighting},
          {"literal_clip", c.literal_clip},
          {"langground_corpus", c.langground_corpus},
          {"langground_steps", c.langground_steps}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  const json known = to_json(c);
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw std::invalid_argument("train config: unknown key '" + k + "'");
  c.n_parallel_rollouts = j.value("n_parallel_rollouts", c.n_parallel_rollouts);
  c.ppo_epochs = j.value("ppo_epochs", c.ppo_epochs);
  c.n_minibatches = j.value("n_minibatches", c.n_minibatches);
  c.lr = j.value("lr", c.lr);
  c.lang_lr = j.value("lang_lr", c.lang_lr);
  c.lang_batch = j.value("lang_batch", c.lang_batch);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.warmup_lr_factor = j.value("warmup_lr_factor", c.warmup_lr_factor);
  c.clip_eps = j.value("clip_eps", c.clip_eps);
  c.gamma = j.value("gamma", c.gamma);
  c.gae_lambda = j.value("gae_lambda", c.gae_lambda);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.value_clip = j.value("value_clip", c.value_clip);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.total_env_steps = j.value("total_env_steps", c.total_env_steps);
  c.chunk_length = j.value("chunk_length", c.chunk_length);
  c.lang_buffer_size = j.value("lang_buffer_size", c.lang_buffer_size);
  c.dynamic_weighting = j.value("dynamic_weighting", c.dynamic_weighting);
  c.literal_clip = j.value("literal_clip", c.literal_clip);
  c.langground_corpus = j.value("langground_corpus", c.langground_corpus);
  c.langground_steps = j.value("langground_steps", c.langground_steps);
  c.validate();
  return c;
}

// ---- buffer ----------------------------------------------------------------

long RolloutBuffer::total_steps() const {
  long n = 0;
  for (const auto& s : steps) n += static_cast<long>(s.rows.size());
  return n;
}

Real RolloutBuffer::success_rate() const {
  if (episode_success.empty()) return 0;
  return static_cast<Real>(std::count(episode_success.begin(), episode_success.end(), true)) /
         static_cast<Real>(episode_success.size());
}

Real RolloutBuffer::mean_episode_length() const {
  if (episode_lengths.empty()) return 0;
  return static_cast<Real>(std::accumulate(episode_lengths.begin(), episode_lengths.end(), 0L)) /
         static_cast<Real>(episode_lengths.size());
}

Real RolloutBuffer::mean_tokens_per_message() const {
  return message_count > 0 ? static_cast<Real>(message_tokens) / static_cast<Real>(message_count) : 0.0;
}

RolloutBuffer collect_rollouts(Team& team, std::vector<std::unique_ptr<lang::TaskEnv>>& envs, int chunk_length,
                               nn::Rng& rng) {
  if (envs.empty()) throw std::invalid_argument("collect_rollouts: no environments");
  const int E = static_cast<int>(envs.size());
  const int n = team.n_agents();
  const int obs_dim = team.shape().obs_dim;
  if (envs[0]->n_agents() != n || envs[0]->obs_dim() != obs_dim)
    throw std::invalid_argument("collect_rollouts: environment does not match the team shape");
  RolloutBuffer buf;
  buf.n_envs = E;
  buf.n_agents = n;
  buf.chunk_length = chunk_length;
  buf.episode_lengths.assign(static_cast<std::size_t>(E), 0);
  buf.episode_success.assign(static_cast<std::size_t>(E), false);

  std::vector<std::vector<lang::FlatObs>> obs(static_cast<std::size_t>(E));
  for (int e = 0; e < E; ++e) obs[static_cast<std::size_t>(e)] = envs[static_cast<std::size_t>(e)]->reset(rng());
  Hidden hidden = team.initial_hidden(E);
  std::vector<int> alive(static_cast<std::size_t>(E));
  std::iota(alive.begin(), alive.end(), 0);
  const bool tokens = team.variant().uses_tokens();

  for (int t = 0; !alive.empty(); ++t) {
    StepRecord rec;
    rec.rows = alive;
    const auto B = static_cast<Index>(alive.size());
    rec.obs.assign(static_cast<std::size_t>(n), Matrix(B, obs_dim));
    rec.descriptions.assign(static_cast<std::size_t>(n), std::vector<TokenSeq>(static_cast<std::size_t>(B)));
    for (Index r = 0; r < B; ++r) {
      const auto e = static_cast<std::size_t>(alive[static_cast<std::size_t>(r)]);
      for (int i = 0; i < n; ++i) {
        const auto& o = obs[e][static_cast<std::size_t>(i)];
        rec.obs[static_cast<std::size_t>(i)].row(r) =
            Eigen::Map<const Eigen::RowVectorXd>(o.data(), static_cast<Index>(o.size()));
        rec.descriptions[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] = envs[e]->describe(i).tokens;
      }
    }
    if (t % chunk_length == 0) rec.hidden = hidden.rows(alive);
    Hidden h = hidden.rows(alive);
    agents::StepInput in;
    in.obs = rec.obs;
    in.oracle = &rec.descriptions;
    agents::TeamStep ts = team.step(in, h, rng, agents::Sampling::Sample, agents::Sampling::Sample);
    hidden.scatter(alive, h);

    rec.joint_obs = std::move(ts.joint_obs);
    for (int i = 0; i < n; ++i) {
      auto& a = ts.agents[static_cast<std::size_t>(i)];
      rec.comm_input.push_back(std::move(a.comm_input));
      rec.actions.push_back(a.actions);
      rec.log_probs.push_back(a.log_probs);
      rec.values.push_back(a.values);
      if (team.langground_encoder)
        rec.langground_targets.push_back(team.langground_encoder->encode(rec.descriptions[static_cast<std::size_t>(i)]));
    }
    if (tokens) {
      for (const auto& per_agent : ts.messages)
        for (const auto& m : per_agent) {
          ++buf.message_count;
          buf.message_tokens += static_cast<long>(m.size()) - 1;
        }
    }

    rec.rewards.resize(static_cast<std::size_t>(B));
    rec.dones.resize(static_cast<std::size_t>(B));
    std::vector<int> next;
    std::vector<int> acts(static_cast<std::size_t>(n));
    for (Index r = 0; r < B; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      const auto e = static_cast<std::size_t>(alive[ur]);
      for (int i = 0; i < n; ++i) acts[static_cast<std::size_t>(i)] = rec.actions[static_cast<std::size_t>(i)][ur];
      lang::TaskStep s = envs[e]->step(acts);
      rec.rewards[ur] = s.reward;
      rec.dones[ur] = s.done;
      if (s.done) {
        buf.episode_lengths[e] = t + 1;
        buf.episode_success[e] = s.success;
      } else {
        obs[e] = std::move(s.observations);
        next.push_back(alive[ur]);
      }
    }
    buf.steps.push_back(std::move(rec));
    alive = std::move(next);
  }
  return buf;
}

void compute_advantages(RolloutBuffer& buf, Real gamma, Real lambda, bool normalize) {
  const int n = buf.n_agents;
  // Per environment: (step, row) in time order.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> trace(static_cast<std::size_t>(buf.n_envs));
  for (std::size_t t = 0; t < buf.steps.size(); ++t) {
    auto& s = buf.steps[t];
    s.advantages.assign(static_cast<std::size_t>(n), std::vector<Real>(s.rows.size()));
    s.returns.assign(static_cast<std::size_t>(n), std::vector<Real>(s.rows.size()));
    for (std::size_t r = 0; r < s.rows.size(); ++r) trace[static_cast<std::size_t>(s.rows[r])].push_back({t, r});
  }
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    std::vector<Real> all;
    for (const auto& tr : trace) {
      std::vector<Real> rew, val;
      auto done = std::make_unique<bool[]>(tr.size());
      for (std::size_t k = 0; k < tr.size(); ++k) {
        const auto [t, r] = tr[k];
        rew.push_back(buf.steps[t].rewards[r]);
        val.push_back(buf.steps[t].values[ui][r]);
        done[k] = buf.steps[t].dones[r];
      }
      const GaeResult g = compute_gae(rew, val, std::span<const bool>(done.get(), tr.size()), gamma, lambda);
      for (std::size_t k = 0; k < tr.size(); ++k) {
        buf.steps[tr[k].first].advantages[ui][tr[k].second] = g.advantages[k];
        buf.steps[tr[k].first].returns[ui][tr[k].second] = g.returns[k];
      }
      all.insert(all.end(), g.advantages.begin(), g.advantages.end());
    }
    if (!normalize || all.empty()) continue;
    const Real mean = std::accumulate(all.begin(), all.end(), 0.0) / static_cast<Real>(all.size());
    Real var = 0;
    for (Real a : all) var += (a - mean) * (a - mean);
    const Real sd = std::sqrt(var / static_cast<Real>(all.size()));
    for (auto& s : buf.steps)
      for (Real& a : s.advantages[ui]) a = (a - mean) / (sd + 1e-8);
  }
}

// ---- language buffer -------------------------------------------------------

LanguageBuffer::LanguageBuffer(int capacity, int obs_dim)
    : capacity_(capacity), obs_(Matrix::Zero(capacity, obs_dim)), desc_(static_cast<std::size_t>(capacity)) {
  if (capacity < 1) throw std::invalid_argument("LanguageBuffer: capacity must be positive");
}

void LanguageBuffer::push(const Eigen::Ref<const Eigen::RowVectorXd>& obs, TokenSeq description) {
  obs_.row(static_cast<Index>(head_)) = obs;
  desc_[head_] = std::move(description);
  head_ = (head_ + 1) % static_cast<std::size_t>(capacity_);
  count_ = std::min(count_ + 1, static_cast<std::size_t>(capacity_));
}

std::pair<Matrix, std::vector<TokenSeq>> LanguageBuffer::sample(std::size_t n, nn::Rng& rng) const {
  if (count_ == 0) throw std::logic_error("LanguageBuffer: empty");
  std::uniform_int_distribution<std::size_t> pick(0, count_ - 1);
  Matrix obs(static_cast<Index>(n), obs_.cols());
  std::vector<TokenSeq> desc(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = pick(rng);
    obs.row(static_cast<Index>(k)) = obs_.row(static_cast<Index>(i));
    desc[k] = desc_[i];
  }
  return {std::move(obs), std::move(desc)};
}

void add_language_pairs(LanguageBuffers& lang, const RolloutBuffer& buf, int eos, int pad) {
  for (const auto& s : buf.steps) {
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
      TokenSeq joint;
      for (int i = 0; i < buf.n_agents; ++i) {
        const auto& d = s.descriptions[static_cast<std::size_t>(i)][r];
        lang.per_agent.push(s.obs[static_cast<std::size_t>(i)].row(static_cast<Index>(r)), d);
        if (i > 0) joint.push_back(pad);
        for (int tok : d) {
          if (tok == eos) break;
          joint.push_back(tok);
        }
      }
      joint.push_back(eos);
      lang.joint.push(s.joint_obs.row(static_cast<Index>(r)), std::move(joint));
    }
  }
}

// ---- losses ----------------------------------------------------------------

std::array<bool, kNumLossKinds> active_losses(const agents::VariantSpec& v) {
  return {true,
          true,
          v.language_learning,
          v.language_learning,
          v.grounding == Grounding::AutoEncoder,
          v.grounding == Grounding::LangGround};
}

namespace {

Var add_opt(const Var& a, const Var& b) { return a.valid() ? nn::add(a, b) : b; }

void add_total(LossTotals* totals, int agent, LossKind k, Real v) {
  if (!totals) return;
  auto& slot = totals->per_agent[static_cast<std::size_t>(agent)][static_cast<std::size_t>(k)];
  slot = slot.value_or(0.0) + v;
}

}  // namespace

Var window_loss(Tape& t, Team& team, const RolloutBuffer& buf, std::size_t t0, std::span<const int> env_filter,
                const std::vector<LossWeights>& weights, const TrainConfig& cfg, Real sample_count,
                LossTotals* totals) {
  const StepRecord& first = buf.steps.at(t0);
  if (!first.hidden) throw std::logic_error("window_loss: window must start at a stored hidden state");
  const int n = team.n_agents();
  const auto& variant = team.variant();
  const bool ec = variant.comm == CommStrategy::ContinuousEC;
  const bool ae = variant.grounding == Grounding::AutoEncoder;
  const bool lg = variant.grounding == Grounding::LangGround;

  std::vector<int> rows0;     // env ids in this window
  std::vector<int> start_pos;  // their positions at t0
  for (std::size_t p = 0; p < first.rows.size(); ++p) {
    const int e = first.rows[p];
    if (!env_filter.empty() && !std::binary_search(env_filter.begin(), env_filter.end(), e)) continue;
    rows0.push_back(e);
    start_pos.push_back(static_cast<int>(p));
  }
  if (rows0.empty()) return Var();
  const auto B0 = static_cast<Index>(rows0.size());
  const Hidden start = first.hidden->rows(start_pos);

  std::vector<Var> h_obs, h_joint, h_comm;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    h_obs.push_back(t.constant(start.obs[ui]));
    h_joint.push_back(t.constant(start.joint[ui]));
    h_comm.push_back(t.constant(start.comm[ui]));
  }

  std::vector<Var> surr(static_cast<std::size_t>(n)), ent(static_cast<std::size_t>(n)),
      val(static_cast<std::size_t>(n)), aes(static_cast<std::size_t>(n)), lgs(static_cast<std::size_t>(n));
  std::vector<int> pos(static_cast<std::size_t>(buf.n_envs), -1);
  const std::size_t t_end = std::min(buf.steps.size(), t0 + static_cast<std::size_t>(buf.chunk_length));
  for (std::size_t ts = t0; ts < t_end; ++ts) {
    const StepRecord& st = buf.steps[ts];
    std::fill(pos.begin(), pos.end(), -1);
    for (std::size_t p = 0; p < st.rows.size(); ++p) pos[static_cast<std::size_t>(st.rows[p])] = static_cast<int>(p);
    Matrix mask = Matrix::Zero(B0, 1);
    std::vector<int> src(static_cast<std::size_t>(B0), -1);
    for (Index k = 0; k < B0; ++k) {
      src[static_cast<std::size_t>(k)] = pos[static_cast<std::size_t>(rows0[static_cast<std::size_t>(k)])];
      mask(k, 0) = src[static_cast<std::size_t>(k)] >= 0 ? 1.0 : 0.0;
    }
    if (mask.sum() == 0) break;
    auto take = [&](const Matrix& m) {
      Matrix out = Matrix::Zero(B0, m.cols());
      for (Index k = 0; k < B0; ++k)
        if (src[static_cast<std::size_t>(k)] >= 0) out.row(k) = m.row(src[static_cast<std::size_t>(k)]);
      return out;
    };
    auto take_vec = [&](const std::vector<Real>& v) {
      Matrix out = Matrix::Zero(B0, 1);
      for (Index k = 0; k < B0; ++k)
        if (src[static_cast<std::size_t>(k)] >= 0) out(k, 0) = v[static_cast<std::size_t>(src[static_cast<std::size_t>(k)])];
      return out;
    };

    const Var joint = t.constant(take(st.joint_obs));
    std::vector<Var> ctx(static_cast<std::size_t>(n));
    std::vector<Matrix> obs_i(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      AgentNet& a = team.agents[ui];
      obs_i[ui] = take(st.obs[ui]);
      h_obs[ui] = a.obs_encoder.forward(t, a.input_mlp.forward(t, t.constant(obs_i[ui])), h_obs[ui]);
      h_joint[ui] = a.joint_obs_encoder.forward(t, a.joint_input_mlp.forward(t, joint), h_joint[ui]);
      if (ec) ctx[ui] = a.comm_policy.forward(t, h_obs[ui]).output;
    }
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      AgentNet& a = team.agents[ui];
      const Var comm_in = ec ? nn::concat_cols(ctx) : t.constant(take(st.comm_input[ui]));
      h_comm[ui] = a.comm_encoder.forward(t, comm_in, h_comm[ui]);
      const Var pol_in[] = {h_obs[ui], h_comm[ui]};
      const Var logp_all = nn::log_softmax_rows(a.action_head.forward(t, nn::concat_cols(pol_in)).output);
      std::vector<int> acts(static_cast<std::size_t>(B0), 0);
      for (Index k = 0; k < B0; ++k)
        if (src[static_cast<std::size_t>(k)] >= 0)
          acts[static_cast<std::size_t>(k)] = st.actions[ui][static_cast<std::size_t>(src[static_cast<std::size_t>(k)])];
      const Var logp = nn::pick(logp_all, acts);
      surr[ui] = add_opt(surr[ui], ppo_surrogate_sum(logp, take_vec(st.log_probs[ui]), take_vec(st.advantages[ui]),
                                                      cfg.clip_eps, mask));
      ent[ui] = add_opt(ent[ui], entropy_sum(logp_all, mask));
      const Var val_in[] = {h_joint[ui], h_comm[ui]};
      const Var v = a.value_head.forward(t, nn::concat_cols(val_in)).output;
      val[ui] = add_opt(val[ui], clipped_value_loss_sum(v, take_vec(st.values[ui]), take_vec(st.returns[ui]),
                                                         cfg.value_clip, mask));
      if (ae) aes[ui] = add_opt(aes[ui], autoencoder_loss_sum(a.reconstructor->forward(t, ctx[ui]).output, obs_i[ui], mask));
      if (lg) lgs[ui] = add_opt(lgs[ui], langground_loss_sum(ctx[ui], take(st.langground_targets[ui]), mask));
    }
  }

  Var total;
  const Real inv = 1.0 / sample_count;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const LossWeights& w = weights[ui];
    const Var pol = nn::scale(nn::add(surr[ui], nn::scale(ent[ui], cfg.entropy_coef)), -inv);
    const Var vl = nn::scale(val[ui], inv);
    add_total(totals, i, LossKind::Policy, pol.scalar());
    add_total(totals, i, LossKind::Value, vl.scalar());
    total = add_opt(total, nn::add(nn::scale(pol, w[LossKind::Policy]), nn::scale(vl, w[LossKind::Value])));
    if (ae && w.on(LossKind::AutoEncoder)) {
      const Var l = nn::scale(aes[ui], inv);
      add_total(totals, i, LossKind::AutoEncoder, l.scalar());
      total = nn::add(total, nn::scale(l, w[LossKind::AutoEncoder]));
    }
    if (lg && w.on(LossKind::LangGround)) {
      const Var l = nn::scale(lgs[ui], inv);
      add_total(totals, i, LossKind::LangGround, l.scalar());
      total = nn::add(total, nn::scale(l, w[LossKind::LangGround]));
    }
  }
  return total;
}

Var language_loss(Tape& t, AgentNet& agent, const LanguageBatch& batch, const LossWeights& w, bool literal_clip,
                  LossArray* unweighted) {
  Var total;
  if (w.on(LossKind::Caption)) {
    const Var ctx = agents::context_from_obs(t, agent, t.constant(batch.obs));
    const Var l = agent.decoder.caption_loss(t, ctx, batch.descriptions);
    if (unweighted) (*unweighted)[static_cast<std::size_t>(LossKind::Caption)] = l.scalar();
    total = nn::scale(l, w[LossKind::Caption]);
  }
  if (w.on(LossKind::Clip)) {
    const Var v = agents::embed_visual(t, agent, t.constant(batch.joint_obs));
    const Var e = agent.language_encoder.encode(t, batch.joint_descriptions);
    const Var l = literal_clip ? clip_loss(v, e)
                               : weighted_clip_loss(v, e, contrastive_pair_weights(batch.joint_descriptions));
    if (unweighted) (*unweighted)[static_cast<std::size_t>(LossKind::Clip)] = l.scalar();
    total = add_opt(total, nn::scale(l, w[LossKind::Clip]));
  }
  return total;
}

Optimizers make_optimizers(Team& team, const TrainConfig& cfg) {
  Optimizers o;
  for (auto& a : team.agents) {
    o.control.emplace_back(a.control_parameters(), cfg.lr, 0.9, 0.999, cfg.adam_eps);
    o.language.emplace_back(a.language_parameters(), cfg.lang_lr, 0.9, 0.999, cfg.adam_eps);
  }
  return o;
}

namespace {

void require_finite(Real v, const char* what, int agent, int epoch) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite ") + what + " loss (agent " + std::to_string(agent) + ", epoch " +
                             std::to_string(epoch) + ")");
}

}  // namespace

std::vector<LossArray> update(Team& team, RolloutBuffer& buf, const LanguageBuffers* lang, const TrainConfig& cfg,
                              const std::vector<LossWeights>& weights, Optimizers& opt, Real control_lr_scale,
                              nn::Rng& rng) {
  const int n = team.n_agents();
  if (static_cast<int>(weights.size()) != n) throw std::invalid_argument("update: one weight set per agent");
  const int M = cfg.n_minibatches;
  std::vector<std::vector<int>> filters(static_cast<std::size_t>(M));
  std::vector<Real> counts(static_cast<std::size_t>(M), 0.0);
  for (int e = 0; e < buf.n_envs; ++e) filters[static_cast<std::size_t>(e % M)].push_back(e);
  for (const auto& s : buf.steps)
    for (int e : s.rows) counts[static_cast<std::size_t>(e % M)] += 1.0;
  if (M == 1) filters[0].clear();

  bool language = false;
  for (const auto& w : weights) language = language || w.on(LossKind::Caption) || w.on(LossKind::Clip);
  language = language && lang != nullptr && lang->per_agent.size() > 0;

  std::vector<LossArray> mean(static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    LossTotals totals{std::vector<LossArray>(static_cast<std::size_t>(n))};
    for (int m = 0; m < M; ++m) {
      if (counts[static_cast<std::size_t>(m)] == 0) continue;
      for (std::size_t t0 = 0; t0 < buf.steps.size(); t0 += static_cast<std::size_t>(buf.chunk_length)) {
        Tape t;
        const Var loss = window_loss(t, team, buf, t0, filters[static_cast<std::size_t>(m)], weights, cfg,
                                     counts[static_cast<std::size_t>(m)], &totals);
        if (!loss.valid()) continue;
        require_finite(loss.scalar(), "combined", -1, epoch);
        t.backward(loss);
      }
      if (language) {
        for (int i = 0; i < n; ++i) {
          const auto ui = static_cast<std::size_t>(i);
          LanguageBatch b;
          std::tie(b.obs, b.descriptions) = lang->per_agent.sample(static_cast<std::size_t>(cfg.lang_batch), rng);
          std::tie(b.joint_obs, b.joint_descriptions) = lang->joint.sample(static_cast<std::size_t>(cfg.lang_batch), rng);
          LossArray parts;
          Tape t;
          const Var loss = language_loss(t, team.agents[ui], b, weights[ui], cfg.literal_clip, &parts);
          if (!loss.valid()) continue;
          require_finite(loss.scalar(), "language", i, epoch);
          t.backward(loss);
          for (LossKind k : {LossKind::Caption, LossKind::Clip})
            if (parts[static_cast<std::size_t>(k)]) add_total(&totals, i, k, *parts[static_cast<std::size_t>(k)]);
        }
      }
      for (int i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        nn::clip_grad_norm(opt.control[ui].params(), cfg.max_grad_norm);
        nn::clip_grad_norm(opt.language[ui].params(), cfg.max_grad_norm);
        opt.control[ui].step(control_lr_scale);
        opt.language[ui].step();
      }
    }
    for (int i = 0; i < n; ++i)
      for (std::size_t k = 0; k < kNumLossKinds; ++k) {
        const auto& v = totals.per_agent[static_cast<std::size_t>(i)][k];
        if (!v) continue;
        require_finite(*v, std::string(to_string(static_cast<LossKind>(k))).c_str(), i, epoch);
        auto& slot = mean[static_cast<std::size_t>(i)][k];
        slot = slot.value_or(0.0) + *v / (static_cast<Real>(M) * cfg.ppo_epochs);
      }
  }
  return mean;
}

// ---- metrics ---------------------------------------------------------------

void write_metrics_header(std::ostream& out) {
  out << "iteration,env_steps";
  for (int k = 0; k < kNumLossKinds; ++k) out << ",loss_" << to_string(static_cast<LossKind>(k));
  for (int k = 0; k < kNumLossKinds; ++k) out << ",beta_" << to_string(static_cast<LossKind>(k));
  out << ",success_rate,mean_episode_length,mean_tokens_per_message,lr_scale\n";
}

void write_metrics_row(std::ostream& out, const IterationMetrics& m) {
  const auto old = out.precision(17);
  out << m.iteration << ',' << m.env_steps;
  for (Real v : m.loss) out << ',' << v;
  for (Real v : m.beta) out << ',' << v;
  out << ',' << m.success_rate << ',' << m.mean_episode_length << ',' << m.mean_tokens_per_message << ','
      << m.lr_scale << '\n';
  out.precision(old);
}

// ---- trainer ---------------------------------------------------------------

void ensure_langground_encoder(Team& team, const lang::TaskEnvFactory& factory, const TrainConfig& cfg,
                               std::uint64_t seed) {
  if (team.variant().grounding != Grounding::LangGround || team.langground_encoder) return;
  auto env = factory();
  const auto corpus = lang::corpus_generate(*env, lang::uniform_random_policy(env->n_actions()),
                                            static_cast<std::size_t>(cfg.langground_corpus), seed);
  agents::LangGroundPretrainConfig pc;
  pc.steps = cfg.langground_steps;
  auto model = agents::pretrain_langground_encoder(corpus, team.shape(), team.model(), pc, seed);
  team.langground_encoder = std::move(model.language);
  team.langground_encoder->set_frozen(true);
}

Trainer::Trainer(Team& team, lang::TaskEnvFactory factory, TrainConfig config, std::uint64_t seed)
    : team_(team), factory_(std::move(factory)), config_(config), rng_(seed) {
  config_.validate();
  ensure_langground_encoder(team_, factory_, config_, seed ^ 0x9e3779b97f4a7c15ULL);
  for (int e = 0; e < config_.n_parallel_rollouts; ++e) envs_.push_back(factory_());
  const auto& probe = *envs_.front();
  if (probe.n_agents() != team_.n_agents() || probe.obs_dim() != team_.shape().obs_dim ||
      probe.n_actions() != team_.shape().n_actions || probe.vocabulary().size() != team_.shape().vocab_size)
    throw std::invalid_argument("Trainer: environment does not match the team shape");
  if (team_.variant().language_learning)
    lang_.emplace(LanguageBuffers{LanguageBuffer(config_.lang_buffer_size, probe.obs_dim()),
                                  LanguageBuffer(config_.lang_buffer_size, probe.obs_dim() * probe.n_agents())});
  opt_ = make_optimizers(team_, config_);
  previous_.assign(static_cast<std::size_t>(team_.n_agents()), LossArray{});
  const auto active = active_losses(team_.variant());
  for (int i = 0; i < team_.n_agents(); ++i) weights_.push_back(dynamic_weights(LossArray{}, active));
}

Real Trainer::control_lr_scale() const {
  return env_steps_ < config_.warmup_steps ? config_.warmup_lr_factor : 1.0;
}

IterationMetrics Trainer::iterate() {
  const Real scale = control_lr_scale();
  RolloutBuffer buf = collect_rollouts(team_, envs_, config_.chunk_length, rng_);
  env_steps_ += buf.total_steps();
  compute_advantages(buf, config_.gamma, config_.gae_lambda);
  if (lang_) add_language_pairs(*lang_, buf, team_.shape().eos(), team_.shape().pad());
  const auto losses = update(team_, buf, lang_ ? &*lang_ : nullptr, config_, weights_, opt_, scale, rng_);

  IterationMetrics m;
  m.iteration = iteration_;
  m.env_steps = env_steps_;
  m.success_rate = buf.success_rate();
  m.mean_episode_length = buf.mean_episode_length();
  m.mean_tokens_per_message = buf.mean_tokens_per_message();
  m.lr_scale = scale;
  const auto n = static_cast<Real>(team_.n_agents());
  for (std::size_t i = 0; i < losses.size(); ++i)
    for (std::size_t k = 0; k < kNumLossKinds; ++k) {
      m.loss[k] += losses[i][k].value_or(0.0) / n;
      m.beta[k] += weights_[i].beta[k] / n;
    }

  previous_ = losses;
  const auto active = active_losses(team_.variant());
  if (config_.dynamic_weighting)
    for (std::size_t i = 0; i < weights_.size(); ++i) weights_[i] = dynamic_weights(previous_[i], active);
  ++iteration_;
  return m;
}

void Trainer::run(const std::function<void(const IterationMetrics&)>& on_iteration) {
  while (env_steps_ < config_.total_env_steps) {
    const IterationMetrics m = iterate();
    if (on_iteration) on_iteration(m);
  }
}

}  // namespace lamarl::train
