#include <doctest.h>

#include "lamarl/nn/gradcheck.hpp"
#include "lamarl/nn/ops.hpp"
#include "lamarl/train/toy_tasks.hpp"
#include "lamarl/train/trainer.hpp"
#include "reference.hpp"

#include <cmath>
#include <set>
#include <sstream>

using namespace lamarl;
using namespace lamarl::train;
using agents::TokenSeq;
using agents::variant_from_name;
using reference::brute_force_gae;
using reference::random_matrix;

namespace {

Matrix col(std::initializer_list<Real> v) {
  Matrix m(static_cast<nn::Index>(v.size()), 1);
  nn::Index i = 0;
  for (Real x : v) m(i++, 0) = x;
  return m;
}

GaeResult gae(const std::vector<Real>& r, const std::vector<Real>& v, const std::vector<int>& done, Real g, Real l) {
  auto d = std::make_unique<bool[]>(done.size());
  for (std::size_t i = 0; i < done.size(); ++i) d[i] = done[i] != 0;
  return compute_gae(r, v, std::span<const bool>(d.get(), done.size()), g, l);
}

lang::TaskEnvFactory small_grid(int agents = 2, int limit = 5) {
  auto cfg = env::GridConfig::predator_prey(12);
  cfg.n_agents = agents;
  cfg.n_preys = 1;
  cfg.episode_limit = limit;
  return lang::grid_factory(cfg);
}

agents::TeamShape shape_of(const lang::TaskEnv& e) {
  return {e.n_agents(), e.obs_dim(), e.n_actions(), e.vocabulary().size()};
}

agents::ModelConfig tiny_model(int hidden = 4) {
  agents::ModelConfig m;
  m.hidden_dim = hidden;
  return m;
}

std::vector<std::unique_ptr<lang::TaskEnv>> make_envs(const lang::TaskEnvFactory& f, int n) {
  std::vector<std::unique_ptr<lang::TaskEnv>> out;
  for (int i = 0; i < n; ++i) out.push_back(f());
  return out;
}

std::vector<Matrix> snapshot(const std::vector<nn::ParamArray*>& ps) {
  std::vector<Matrix> out;
  for (auto* p : ps) out.push_back(p->value);
  return out;
}

bool unchanged(const std::vector<nn::ParamArray*>& ps, const std::vector<Matrix>& before) {
  for (std::size_t i = 0; i < ps.size(); ++i)
    if (ps[i]->value != before[i]) return false;
  return true;
}

}  // namespace

// ---- formulas --------------------------------------------------------------

TEST_CASE("GAE worked examples") {
  const auto g = gae({-1, -1}, {0, 0}, {0, 1}, 1.0, 1.0);
  CHECK(g.advantages[0] == -2.0);
  CHECK(g.advantages[1] == -1.0);
  const auto single = gae({5}, {2}, {1}, 0.99, 0.95);
  CHECK(single.advantages[0] == 3.0);
  CHECK(single.returns[0] == 5.0);
  // lambda = 0 reduces to one-step TD errors.
  const auto td = gae({1, 2, 3}, {0.5, 0.25, 1}, {0, 0, 1}, 0.9, 0.0);
  CHECK(td.advantages[0] == doctest::Approx(1 + 0.9 * 0.25 - 0.5));
  CHECK(td.advantages[1] == doctest::Approx(2 + 0.9 * 1 - 0.25));
  CHECK(td.advantages[2] == doctest::Approx(2.0));
  CHECK_THROWS_AS(gae({1, 2}, {0}, {0, 1}, 0.9, 0.9), std::invalid_argument);
}

TEST_CASE("GAE matches the brute-force discounted sum of TD errors") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<Real> u(-2, 2);
  std::bernoulli_distribution end(0.15);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(trial % 37);
    std::vector<Real> r(n), v(n);
    std::vector<int> d(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = u(rng);
      v[i] = u(rng);
      d[i] = end(rng) ? 1 : 0;
    }
    d.back() = 1;
    const Real gamma = 0.9 + 0.1 * (trial % 10) / 10.0;
    const Real lambda = (trial % 7) / 6.0;
    const auto got = gae(r, v, d, gamma, lambda);
    const auto want = brute_force_gae(r, v, d, gamma, lambda);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(got.advantages[i] - want[i]) <= 1e-10);
      CHECK(std::abs(got.returns[i] - (want[i] + v[i])) <= 1e-10);
    }
  }
}

TEST_CASE("clipped surrogate arithmetic") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == doctest::Approx(0.5));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == doctest::Approx(-1.5));
  CHECK(clipped_surrogate(1.0, 3.0, 0.2) == doctest::Approx(3.0));

  const std::vector<Real> lp_new{std::log(1.5), std::log(0.5), 0.0};
  const std::vector<Real> lp_old{0.0, 0.0, 0.0};
  const std::vector<Real> adv{1.0, -1.0, 2.0};
  CHECK(ppo_policy_objective(lp_new, lp_old, adv, 0.2) == doctest::Approx((1.2 - 0.8 + 2.0) / 3));

  nn::Tape t;
  const Var lp = t.constant(col({std::log(1.5), std::log(0.5), 0.0, 5.0}));
  const Var s = ppo_surrogate_sum(lp, col({0, 0, 0, 0}), col({1, -1, 2, 100}), 0.2, col({1, 1, 1, 0}));
  CHECK(s.scalar() == doctest::Approx(1.2 - 0.8 + 2.0));
}

TEST_CASE("clipped value loss is never below the unclipped error") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<Real> u(-3, 3);
  for (int trial = 0; trial < 500; ++trial) {
    const Real v = u(rng), old = u(rng), g = u(rng);
    nn::Tape t;
    const Real clipped = clipped_value_loss_sum(t.constant(col({v})), col({old}), col({g}), 0.2, col({1})).scalar();
    const Real plain = (v - g) * (v - g);
    const Real branch = old + std::clamp(v - old, -0.2, 0.2) - g;
    CHECK(clipped >= plain - 1e-15);
    CHECK(clipped == doctest::Approx(std::max(plain, branch * branch)));
  }
  nn::Tape t;
  CHECK(value_loss_sum(t.constant(col({1, 2, 3})), col({1, 0, 0}), col({1, 1, 0})).scalar() == 4.0);
  CHECK(value_loss(std::vector<Real>{1, 3}, std::vector<Real>{0, 0}) == 5.0);
}

TEST_CASE("entropy of masked categorical rows") {
  const Matrix logits = random_matrix(3, 5, 2);
  const Matrix lp = nn::log_softmax_rows(logits);
  Real want = 0;
  for (nn::Index r : {0, 2})
    for (nn::Index c = 0; c < 5; ++c) want -= std::exp(lp(r, c)) * lp(r, c);
  nn::Tape t;
  CHECK(entropy_sum(t.constant(lp), col({1, 0, 1})).scalar() == doctest::Approx(want).epsilon(1e-12));
  nn::Tape t2;
  const Matrix uniform = Matrix::Constant(1, 5, -std::log(5.0));
  CHECK(entropy_sum(t2.constant(uniform), col({1})).scalar() == doctest::Approx(std::log(5.0)));
}

TEST_CASE("CLIP loss examples and brute force") {
  {
    nn::Tape t;
    Matrix v(1, 2), l(1, 2);
    v << 1, 0;
    l << 0.8, 0.6;
    CHECK(clip_loss(t.constant(v), t.constant(l)).scalar() == doctest::Approx(-0.8));
  }
  {
    nn::Tape t;
    Matrix v(2, 3), l(2, 3);
    v << 1, 0, 0, 2, 0, 0;
    l << 0, 1, 0, 0, 0, 3;
    CHECK(std::abs(clip_loss(t.constant(v), t.constant(l)).scalar()) < 1e-15);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const nn::Index B = 1 + trial % 9;
    const Matrix v = random_matrix(B, 6, 100 + static_cast<std::uint64_t>(trial));
    const Matrix l = random_matrix(B, 6, 200 + static_cast<std::uint64_t>(trial));
    nn::Tape t;
    CHECK(std::abs(clip_loss(t.constant(v), t.constant(l)).scalar() - reference::brute_force_clip(v, l)) <= 1e-10);
    CHECK(std::abs(clip_loss_reference(v, l) - reference::brute_force_clip(v, l)) <= 1e-10);
    Matrix literal = Matrix::Ones(B, B);
    literal.diagonal().setConstant(-1);
    nn::Tape t2;
    CHECK(std::abs(weighted_clip_loss(t2.constant(v), t2.constant(l), literal).scalar() - reference::brute_force_clip(v, l)) <=
          1e-10);
  }
  nn::Tape t;
  CHECK_THROWS_AS(clip_loss(t.constant(Matrix::Ones(2, 3)), t.constant(Matrix::Ones(3, 3))), std::invalid_argument);
}

TEST_CASE("balanced contrastive weights") {
  const std::vector<std::vector<int>> desc{{1, 9}, {2, 9}, {1, 9}, {9}};
  const Matrix w = contrastive_pair_weights(desc);
  const Real B = 4;
  for (nn::Index j = 0; j < 4; ++j) CHECK(w(j, j) == -1.0 / B);
  // Pairs sharing a description are neither attracted nor repelled.
  CHECK(w(0, 2) == 0.0);
  CHECK(w(2, 0) == 0.0);
  CHECK(w(0, 1) == doctest::Approx(1.0 / (B * 2)));
  CHECK(w(1, 0) == doctest::Approx(1.0 / (B * 3)));
  for (nn::Index j = 0; j < 4; ++j) CHECK(w.row(j).sum() == doctest::Approx(0.0));
  // Perfectly aligned and mutually orthogonal embeddings reach the minimum -1.
  const Matrix e = Matrix::Identity(4, 4);
  nn::Tape t;
  CHECK(weighted_clip_loss(t.constant(e), t.constant(e), contrastive_pair_weights({{1}, {2}, {3}, {4}})).scalar() ==
        doctest::Approx(-1.0));
  CHECK(contrastive_pair_weights({{5}, {5}}) == Matrix(Eigen::DiagonalMatrix<Real, 2>(-0.5, -0.5)));
}

TEST_CASE("grounding losses") {
  nn::Tape t;
  const Matrix obs = random_matrix(3, 4, 5);
  CHECK(autoencoder_loss_sum(t.constant(obs), obs, col({1, 1, 1})).scalar() == 0.0);
  const Real ms = obs.array().square().sum() / 4.0;
  CHECK(autoencoder_loss_sum(t.constant(Matrix::Zero(3, 4)), obs, col({1, 1, 1})).scalar() == doctest::Approx(ms));
  const Matrix target = random_matrix(2, 4, 6);
  CHECK(langground_loss_sum(t.constant(target), target, col({1, 1})).scalar() == 0.0);
  Matrix msg = target;
  msg(0, 1) += 0.5;
  msg(1, 3) -= 2.0;
  CHECK(langground_loss_sum(t.constant(msg), target, col({1, 1})).scalar() == doctest::Approx(0.25 + 4.0));
  CHECK(langground_loss_sum(t.constant(msg), target, col({0, 1})).scalar() == doctest::Approx(4.0));
}

TEST_CASE("dynamic weights are reciprocals of the previous losses") {
  const std::array<bool, kNumLossKinds> lang_on{true, true, true, true, false, false};
  LossArray prev{};
  prev[0] = 2.0;
  prev[1] = 4.0;
  prev[2] = 0.5;
  prev[3] = 1.0;
  const auto w = dynamic_weights(prev, lang_on);
  CHECK(w.beta[0] == 0.5);
  CHECK(w.beta[1] == 0.25);
  CHECK(w.beta[2] == 2.0);
  CHECK(w.beta[3] == 1.0);
  CHECK(w.beta[4] == 0.0);
  CHECK(w.beta[5] == 0.0);
  const auto fresh = dynamic_weights(LossArray{}, lang_on);
  for (int k = 0; k < 4; ++k) CHECK(fresh.beta[static_cast<std::size_t>(k)] == 1.0);
  LossArray odd{};
  odd[0] = -0.125;
  odd[1] = 0.0;
  const auto o = dynamic_weights(odd, lang_on);
  CHECK(o.beta[0] == 8.0);
  CHECK(o.beta[1] == 1.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<Real> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    LossArray p{};
    p[0] = u(rng);
    CHECK(dynamic_weights(p, lang_on).beta[0] == 1.0 / std::abs(*p[0]));
  }
}

TEST_CASE("active losses per variant") {
  CHECK(active_losses(variant_from_name("LAMARL")) == std::array<bool, 6>{true, true, true, true, false, false});
  CHECK(active_losses(variant_from_name("No Comm")) == std::array<bool, 6>{true, true, false, false, false, false});
  CHECK(active_losses(variant_from_name("EC-AutoEncoder")) == std::array<bool, 6>{true, true, false, false, true, false});
  CHECK(active_losses(variant_from_name("EC-LangGround")) == std::array<bool, 6>{true, true, false, false, false, true});
  CHECK(active_losses(variant_from_name("Lang+No Comm"))[2]);
  CHECK_FALSE(active_losses(variant_from_name("No Lang+Oracle"))[3]);
}

// ---- config ----------------------------------------------------------------

TEST_CASE("train config JSON round trip and validation") {
  TrainConfig c;
  c.ppo_epochs = 3;
  c.lr = 1e-3;
  c.literal_clip = true;
  CHECK(train_config_from_json(to_json(c)) == c);
  CHECK(train_config_from_json(nlohmann::json::object()) == TrainConfig{});
  CHECK_THROWS_AS(train_config_from_json({{"ppo_epoch", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json({{"clip_eps", 1.5}}), std::invalid_argument);
  CHECK_THROWS_AS(train_config_from_json({{"n_parallel_rollouts", 0}}), std::invalid_argument);
}

// ---- rollouts --------------------------------------------------------------

TEST_CASE("rollout buffers keep episode bookkeeping consistent") {
  const auto f = small_grid(2, 7);
  auto probe = f();
  agents::Team team(variant_from_name("LAMARL"), tiny_model(), shape_of(*probe), 1);
  auto envs = make_envs(f, 6);
  nn::Rng rng(4);
  const auto buf = collect_rollouts(team, envs, 3, rng);
  CHECK(buf.n_envs == 6);
  long lengths = 0;
  for (int len : buf.episode_lengths) {
    CHECK(len >= 1);
    CHECK(len <= 7);
    lengths += len;
  }
  CHECK(buf.total_steps() == lengths);
  for (std::size_t t = 0; t < buf.steps.size(); ++t) {
    const auto& s = buf.steps[t];
    CHECK(s.hidden.has_value() == (t % 3 == 0));
    CHECK(std::is_sorted(s.rows.begin(), s.rows.end()));
    if (t > 0) {
      const auto& prev = buf.steps[t - 1].rows;
      for (int e : s.rows) CHECK(std::binary_search(prev.begin(), prev.end(), e));
    }
    CHECK(s.joint_obs.rows() == static_cast<nn::Index>(s.rows.size()));
    for (std::size_t r = 0; r < s.rows.size(); ++r) {
      CHECK(s.rewards[r] <= 0.0);
      const bool last = t + 1 == static_cast<std::size_t>(buf.episode_lengths[static_cast<std::size_t>(s.rows[r])]);
      CHECK(s.dones[r] == last);
    }
  }
  CHECK(buf.message_count == 2 * lengths);
  CHECK(buf.mean_tokens_per_message() >= 0.0);
  CHECK(buf.mean_tokens_per_message() <= 7.0);
}

TEST_CASE("advantages per environment match GAE and normalize") {
  const auto f = small_grid(2, 6);
  auto probe = f();
  agents::Team team(variant_from_name("No Comm"), tiny_model(), shape_of(*probe), 1);
  auto envs = make_envs(f, 4);
  nn::Rng rng(5);
  auto buf = collect_rollouts(team, envs, 4, rng);
  auto raw = buf;
  compute_advantages(raw, 0.9, 0.8, false);
  for (int e = 0; e < 4; ++e)
    for (int i = 0; i < 2; ++i) {
      std::vector<Real> r, v;
      std::vector<int> d;
      std::vector<Real> got;
      for (const auto& s : raw.steps)
        for (std::size_t k = 0; k < s.rows.size(); ++k)
          if (s.rows[k] == e) {
            r.push_back(s.rewards[k]);
            v.push_back(s.values[static_cast<std::size_t>(i)][k]);
            d.push_back(s.dones[k] ? 1 : 0);
            got.push_back(s.advantages[static_cast<std::size_t>(i)][k]);
          }
      const auto want = brute_force_gae(r, v, d, 0.9, 0.8);
      for (std::size_t k = 0; k < want.size(); ++k) CHECK(std::abs(got[k] - want[k]) < 1e-10);
    }
  compute_advantages(buf, 0.9, 0.8, true);
  for (int i = 0; i < 2; ++i) {
    std::vector<Real> all;
    for (const auto& s : buf.steps) all.insert(all.end(), s.advantages[static_cast<std::size_t>(i)].begin(),
                                              s.advantages[static_cast<std::size_t>(i)].end());
    Real mean = 0, var = 0;
    for (Real a : all) mean += a;
    mean /= static_cast<Real>(all.size());
    for (Real a : all) var += (a - mean) * (a - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::sqrt(var / static_cast<Real>(all.size())) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("language buffer is a bounded FIFO") {
  LanguageBuffer b(3, 2);
  for (int i = 0; i < 5; ++i) b.push(Eigen::RowVector2d(i, -i), TokenSeq{i, 7});
  CHECK(b.size() == 3);
  std::set<int> seen;
  nn::Rng rng(1);
  const auto [obs, desc] = b.sample(300, rng);
  for (std::size_t k = 0; k < desc.size(); ++k) {
    CHECK(obs(static_cast<nn::Index>(k), 0) == desc[k][0]);
    seen.insert(desc[k][0]);
  }
  CHECK(seen == std::set<int>{2, 3, 4});
  LanguageBuffer empty(2, 1);
  CHECK_THROWS_AS(empty.sample(1, rng), std::logic_error);
  CHECK_THROWS_AS(LanguageBuffer(0, 1), std::invalid_argument);
}

TEST_CASE("language pairs include joint descriptions") {
  const auto f = small_grid(2, 3);
  auto probe = f();
  const auto s = shape_of(*probe);
  agents::Team team(variant_from_name("LAMARL"), tiny_model(), s, 1);
  auto envs = make_envs(f, 2);
  nn::Rng rng(5);
  const auto buf = collect_rollouts(team, envs, 3, rng);
  LanguageBuffers lang{LanguageBuffer(1000, s.obs_dim), LanguageBuffer(1000, 2 * s.obs_dim)};
  add_language_pairs(lang, buf, s.eos(), s.pad());
  CHECK(lang.per_agent.size() == 2 * static_cast<std::size_t>(buf.total_steps()));
  CHECK(lang.joint.size() == static_cast<std::size_t>(buf.total_steps()));
  const auto& d0 = buf.steps[0].descriptions;
  TokenSeq joint(d0[0][0].begin(), d0[0][0].end() - 1);
  joint.push_back(s.pad());
  joint.insert(joint.end(), d0[1][0].begin(), d0[1][0].end());
  CHECK(lang.joint.description(0) == joint);
}

// ---- gradients ---------------------------------------------------------------

TEST_CASE("window and language losses pass finite-difference checks") {
  const auto f = small_grid(2, 4);
  auto probe = f();
  const auto s = shape_of(*probe);
  TrainConfig cfg;
  cfg.langground_corpus = 400;
  cfg.langground_steps = 5;
  for (const char* name : {"LAMARL", "EC", "EC-AutoEncoder", "EC-LangGround", "Observations", "No Comm"}) {
    CAPTURE(name);
    agents::Team team(variant_from_name(name), tiny_model(), s, 3);
    ensure_langground_encoder(team, f, cfg, 1);
    auto envs = make_envs(f, 3);
    nn::Rng rng(7);
    auto buf = collect_rollouts(team, envs, 4, rng);
    compute_advantages(buf, cfg.gamma, cfg.gae_lambda);
    // Move away from the rollout parameters so ratios differ from 1.
    for (auto* p : team.parameters())
      if (!p->frozen) p->value += 0.01 * random_matrix(p->value.rows(), p->value.cols(), p->value.size());
    std::vector<LossWeights> w;
    for (int i = 0; i < 2; ++i) {
      LossWeights lw = dynamic_weights(LossArray{}, active_losses(team.variant()));
      lw.beta = {0.7, 0.3, 1.0, 1.0, 2.0, 1.5};
      w.push_back(lw);
    }
    const Real N = static_cast<Real>(buf.total_steps());
    const auto res = nn::check_gradients(team.parameters(), [&](nn::Tape& t) {
      return window_loss(t, team, buf, 0, {}, w, cfg, N);
    }, 1e-5, 1e-6, 4);
    CHECK(res.entries_checked > 50);
    CHECK(res.max_rel_error <= 1e-3);
    if (team.langground_encoder) {
      std::vector<nn::ParamArray*> frozen;
      team.langground_encoder->collect(frozen);
      for (auto* p : frozen) CHECK(p->grad.isZero());
    }
  }

  agents::Team team(variant_from_name("LAMARL"), tiny_model(), s, 3);
  LanguageBatch b;
  b.obs = random_matrix(4, s.obs_dim, 1, 0, 1);
  b.descriptions = {{1, s.eos()}, {s.eos()}, {2, 3, s.eos()}, {1, s.eos()}};
  b.joint_obs = random_matrix(4, 2 * s.obs_dim, 2, 0, 1);
  b.joint_descriptions = {{1, s.pad(), s.eos()}, {s.pad(), 4, s.eos()}, {2, s.pad(), 2, s.eos()}, {s.pad(), s.eos()}};
  LossWeights w = dynamic_weights(LossArray{}, active_losses(team.variant()));
  w.beta[2] = 0.6;
  w.beta[3] = 1.7;
  for (bool literal : {false, true}) {
    const auto res = nn::check_gradients(team.agents[0].parameters(), [&](nn::Tape& t) {
      return language_loss(t, team.agents[0], b, w, literal);
    }, 1e-5, 1e-6, 4);
    CHECK(res.max_rel_error <= 1e-3);
  }
}

TEST_CASE("captioning gradients reach the observation pathway only") {
  const auto f = small_grid(2, 4);
  auto probe = f();
  const auto s = shape_of(*probe);
  agents::Team team(variant_from_name("LAMARL"), tiny_model(8), s, 3);
  auto& a = team.agents[0];
  LanguageBatch b;
  b.obs = random_matrix(6, s.obs_dim, 1, 0, 1);
  b.descriptions.assign(6, TokenSeq{1, 2, s.eos()});
  LossWeights w = dynamic_weights(LossArray{}, {true, true, true, false, false, false});
  nn::Tape t;
  t.backward(language_loss(t, a, b, w));
  for (auto* p : a.parameters()) {
    CAPTURE(p->name);
    // Single step from a zero state: the recurrent observation weights see no signal.
    const bool reach = p->name.find("/input_mlp/") != std::string::npos ||
                       (p->name.find("/obs_encoder/") != std::string::npos && p->name.find("W_hidden") == std::string::npos) ||
                       p->name.find("/comm_policy/") != std::string::npos || p->name.find("/decoder/") != std::string::npos;
    if (reach)
      CHECK(p->grad.norm() > 0);
    else
      CHECK(p->grad.isZero());
  }
}

// ---- updates -----------------------------------------------------------------

TEST_CASE("one update on a bandit raises the rewarded action's probability") {
  const auto f = [] { return std::make_unique<BanditEnv>(1, 2); };
  BanditEnv probe;
  agents::Team team(variant_from_name("No Comm"), tiny_model(8), shape_of(probe), 3);
  TrainConfig cfg;
  cfg.n_parallel_rollouts = 64;
  cfg.ppo_epochs = 4;
  cfg.warmup_steps = 0;
  cfg.lr = 1e-2;
  auto prob = [&] {
    auto h = team.initial_hidden(1);
    nn::Rng r(0);
    const auto st = team.step({{Matrix(Eigen::RowVector2d(1, 0))}, nullptr, nullptr}, h, r, agents::Sampling::Greedy,
                              agents::Sampling::Greedy);
    return st.agents[0].action_probs(0, 2);
  };
  const Real before = prob();
  Trainer tr(team, f, cfg, 1);
  tr.iterate();
  CHECK(prob() > before);
}

TEST_CASE("a single agent learns the corridor") {
  const auto f = [] { return std::make_unique<CorridorEnv>(5, 10); };
  CorridorEnv probe;
  agents::Team team(variant_from_name("No Comm"), tiny_model(16), shape_of(probe), 1);
  TrainConfig cfg;
  cfg.n_parallel_rollouts = 32;
  cfg.ppo_epochs = 4;
  cfg.warmup_steps = 0;
  cfg.lr = 3e-3;
  Trainer tr(team, f, cfg, 2);
  Real best = 0;
  for (int i = 0; i < 200 && best < 0.95; ++i) best = std::max(best, tr.iterate().success_rate);
  CHECK(best >= 0.95);
}

TEST_CASE("variants without language learning leave language modules untouched") {
  const auto f = small_grid(2, 6);
  auto probe = f();
  TrainConfig cfg;
  cfg.n_parallel_rollouts = 4;
  cfg.ppo_epochs = 2;
  cfg.lang_batch = 16;
  cfg.langground_corpus = 200;
  cfg.langground_steps = 3;
  for (const auto& v : agents::all_variants()) {
    CAPTURE(v.name);
    agents::Team team(v, tiny_model(), shape_of(*probe), 3);
    std::vector<std::vector<Matrix>> lang_before, ctrl_before;
    for (auto& a : team.agents) {
      lang_before.push_back(snapshot(a.language_parameters()));
      ctrl_before.push_back(snapshot(a.control_parameters()));
    }
    Trainer tr(team, f, cfg, 5);
    tr.iterate();
    for (std::size_t i = 0; i < team.agents.size(); ++i) {
      auto& a = team.agents[i];
      CHECK(unchanged(a.language_parameters(), lang_before[i]) == !v.language_learning);
      CHECK_FALSE(unchanged(a.control_parameters(), ctrl_before[i]));
    }
  }
}

TEST_CASE("trainer bookkeeping: warm-up, weights and metrics") {
  const auto f = [] { return std::make_unique<CorridorEnv>(4, 6); };
  CorridorEnv probe(4, 6);
  agents::Team team(variant_from_name("LAMARL"), tiny_model(8), shape_of(probe), 1);
  TrainConfig cfg;
  cfg.n_parallel_rollouts = 8;
  cfg.ppo_epochs = 2;
  cfg.lang_batch = 16;
  cfg.warmup_steps = 30;
  Trainer tr(team, f, cfg, 3);
  CHECK(tr.control_lr_scale() == 1e-2);
  const auto m0 = tr.iterate();
  CHECK(m0.lr_scale == 1e-2);
  CHECK(m0.beta[0] == 1.0);
  CHECK(m0.beta[4] == 0.0);
  CHECK(tr.env_steps() == m0.env_steps);
  const auto m1 = tr.iterate();
  CHECK(m1.iteration == 1);
  // Weights of iteration 1 are reciprocals of iteration 0's mean losses.
  for (int k : {0, 1, 2, 3}) CHECK(m1.beta[static_cast<std::size_t>(k)] == doctest::Approx(1.0 / std::abs(m0.loss[static_cast<std::size_t>(k)])));
  for (const auto& w : tr.weights()) {
    CHECK(w.beta[4] == 0.0);
    CHECK(w.beta[5] == 0.0);
  }
  while (tr.env_steps() < 30) tr.iterate();
  CHECK(tr.control_lr_scale() == 1.0);

  std::ostringstream csv;
  write_metrics_header(csv);
  write_metrics_row(csv, m1);
  const std::string text = csv.str();
  const auto header = text.substr(0, text.find('\n'));
  CHECK(header.rfind("iteration,env_steps,loss_policy", 0) == 0);
  const auto commas = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  CHECK(commas(header) == commas(text.substr(text.find('\n') + 1)) - 0);
  CHECK(commas(header) == 1 + 12 + 4);
}

TEST_CASE("training is bit-reproducible") {
  const auto f = small_grid(2, 6);
  auto probe = f();
  TrainConfig cfg;
  cfg.n_parallel_rollouts = 6;
  cfg.ppo_epochs = 2;
  cfg.lang_batch = 32;
  auto run = [&] {
    agents::Team team(variant_from_name("LAMARL"), tiny_model(), shape_of(*probe), 8);
    Trainer tr(team, f, cfg, 9);
    std::ostringstream out;
    write_metrics_header(out);
    for (int i = 0; i < 3; ++i) write_metrics_row(out, tr.iterate());
    for (auto* p : team.parameters()) out << p->value.sum();
    return out.str();
  };
  CHECK(run() == run());
}

TEST_CASE("captioning learns to describe grid observations") {
  auto cfg = env::GridConfig::predator_prey(12);
  cfg.n_agents = 2;
  cfg.n_preys = 1;
  lang::GridTaskEnv env(cfg);
  const auto corpus = lang::corpus_generate(env, lang::uniform_random_policy(5), 6000, 11);
  // Keep every described scene and an equal share of empty ones.
  std::vector<lang::CorpusPair> pairs;
  std::size_t empty = 0;
  for (const auto& p : corpus) {
    const bool silent = p.description.tokens.size() == 1;
    if (silent && empty * 2 > pairs.size()) continue;
    empty += silent ? 1 : 0;
    pairs.push_back(p);
  }
  const auto s = shape_of(env);
  agents::Team team(variant_from_name("LAMARL"), tiny_model(32), s, 4);
  auto& a = team.agents[0];
  std::vector<nn::ParamArray*> ps;
  a.input_mlp.collect(ps);
  a.obs_encoder.collect(ps);
  a.comm_policy.collect(ps);
  a.decoder.collect(ps);
  nn::Adam opt(ps, 7e-3);
  nn::Rng rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  auto batch = [&](std::size_t n, bool random) {
    LanguageBatch b;
    b.obs.resize(static_cast<nn::Index>(n), s.obs_dim);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& p = pairs[random ? pick(rng) : k];
      b.obs.row(static_cast<nn::Index>(k)) = Eigen::Map<const Eigen::RowVectorXd>(p.obs.data(), s.obs_dim);
      b.descriptions.push_back(p.description.tokens);
    }
    return b;
  };
  const LossWeights w = dynamic_weights(LossArray{}, {true, true, true, false, false, false});
  for (int step = 0; step < 400; ++step) {
    const auto b = batch(128, true);
    nn::Tape t;
    t.backward(language_loss(t, a, b, w));
    nn::clip_grad_norm(ps, 10.0);
    opt.step();
  }
  const auto eval = batch(std::min<std::size_t>(1000, pairs.size()), false);
  nn::Tape t;
  const Matrix ctx = agents::context_from_obs(t, a, t.constant(eval.obs)).value();
  const auto [correct, total] = a.decoder.token_accuracy(ctx, eval.descriptions);
  CHECK(static_cast<Real>(correct) / static_cast<Real>(total) > 0.9);
}
