#include "lamarl/eval/eval.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace lamarl::eval {

using agents::Hidden;
using agents::Sampling;
using nlohmann::json;
using nn::Index;

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

Matrix stack_rows(const std::vector<std::vector<lang::FlatObs>>& obs, std::span<const int> rows, int agent, int dim) {
  Matrix m(static_cast<Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& o = obs[static_cast<std::size_t>(rows[r])][static_cast<std::size_t>(agent)];
    m.row(static_cast<Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(o.data(), dim);
  }
  return m;
}

// Lockstep greedy-message episodes; `visit` sees every step before the envs advance.
template <class Visit>
void run_episodes(Team& team, std::vector<std::unique_ptr<lang::TaskEnv>>& envs, std::span<const std::uint64_t> seeds,
                  nn::Rng& rng, Visit&& visit, std::vector<int>& lengths, std::vector<bool>& success) {
  const int n = team.n_agents();
  const int dim = team.shape().obs_dim;
  const auto E = seeds.size();
  std::vector<std::vector<lang::FlatObs>> obs(E);
  for (std::size_t e = 0; e < E; ++e) obs[e] = envs[e]->reset(seeds[e]);
  Hidden hidden = team.initial_hidden(static_cast<Index>(E));
  std::vector<int> alive(E);
  std::iota(alive.begin(), alive.end(), 0);
  lengths.assign(E, 0);
  success.assign(E, false);
  std::vector<int> acts(static_cast<std::size_t>(n));
  while (!alive.empty()) {
    agents::StepInput in;
    std::vector<std::vector<TokenSeq>> oracle(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      in.obs.push_back(stack_rows(obs, alive, i, dim));
      for (int e : alive) oracle[static_cast<std::size_t>(i)].push_back(envs[static_cast<std::size_t>(e)]->describe(i).tokens);
    }
    in.oracle = &oracle;
    Hidden h = hidden.rows(alive);
    const agents::TeamStep ts = team.step(in, h, rng, Sampling::Sample, Sampling::Greedy);
    hidden.scatter(alive, h);
    visit(alive, ts, oracle);
    std::vector<int> next;
    for (std::size_t r = 0; r < alive.size(); ++r) {
      const auto e = static_cast<std::size_t>(alive[r]);
      for (int i = 0; i < n; ++i) acts[static_cast<std::size_t>(i)] = ts.agents[static_cast<std::size_t>(i)].actions[r];
      lang::TaskStep s = envs[e]->step(acts);
      ++lengths[e];
      if (s.done) {
        success[e] = s.success;
      } else {
        obs[e] = std::move(s.observations);
        next.push_back(alive[r]);
      }
    }
    alive = std::move(next);
  }
}

}  // namespace

SuccessReport evaluate_success(Team& team, const lang::TaskEnvFactory& factory, int n_episodes, std::uint64_t seed,
                               int batch) {
  if (n_episodes <= 0) throw std::invalid_argument("evaluate_success: n_episodes must be positive");
  if (batch <= 0) throw std::invalid_argument("evaluate_success: batch must be positive");
  SuccessReport rep;
  long length_sum = 0, successes = 0, messages = 0, tokens = 0;
  nn::Rng rng(episode_seed(seed, ~0ULL));
  std::vector<std::unique_ptr<lang::TaskEnv>> envs;
  for (int done = 0; done < n_episodes; done += batch) {
    const int count = std::min(batch, n_episodes - done);
    while (static_cast<int>(envs.size()) < count) envs.push_back(factory());
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < count; ++k) seeds.push_back(episode_seed(seed, static_cast<std::uint64_t>(done + k)));
    std::vector<int> lengths;
    std::vector<bool> success;
    run_episodes(
        team, envs, seeds, rng,
        [&](std::span<const int>, const agents::TeamStep& ts, const auto&) {
          for (const auto& per_agent : ts.messages)
            for (const auto& m : per_agent) {
              ++messages;
              tokens += static_cast<long>(m.size()) - 1;
            }
        },
        lengths, success);
    for (int k = 0; k < count; ++k) {
      length_sum += lengths[static_cast<std::size_t>(k)];
      successes += success[static_cast<std::size_t>(k)] ? 1 : 0;
    }
  }
  rep.episodes = n_episodes;
  rep.success_rate = static_cast<Real>(successes) / n_episodes;
  rep.mean_length = static_cast<Real>(length_sum) / n_episodes;
  rep.mean_tokens_per_message = messages > 0 ? static_cast<Real>(tokens) / static_cast<Real>(messages) : 0.0;
  return rep;
}

// ---- teaming -------------------------------------------------------------------

std::unique_ptr<Team> compose_team(const std::string& pattern, const std::vector<const Team*>& sources) {
  if (sources.empty()) throw std::invalid_argument("compose_team: no source teams");
  const Team& first = *sources.front();
  if (static_cast<int>(pattern.size()) != first.n_agents())
    throw std::invalid_argument("compose_team: pattern '" + pattern + "' must have one letter per agent (" +
                                std::to_string(first.n_agents()) + ")");
  for (const Team* t : sources)
    if (t->variant() != first.variant() || t->model() != first.model() || t->shape() != first.shape())
      throw std::invalid_argument("compose_team: source teams differ in variant, model or shape");
  auto team = std::make_unique<Team>(first.variant(), first.model(), first.shape(), 0);
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    const int src = pattern[i] - 'A';
    if (src < 0 || src >= static_cast<int>(sources.size()))
      throw std::invalid_argument("compose_team: letter '" + std::string(1, pattern[i]) + "' names no source team");
    team->agents[i] = sources[static_cast<std::size_t>(src)]->agents[i];
  }
  team->langground_encoder = first.langground_encoder;
  return team;
}

std::vector<TeamingRow> zero_shot_eval(const std::vector<const Team*>& sources, const lang::TaskEnvFactory& factory,
                                       int n_episodes, std::uint64_t seed, const std::vector<std::string>& patterns) {
  std::vector<TeamingRow> rows;
  for (const auto& p : patterns) {
    auto team = compose_team(p, sources);
    rows.push_back({team->variant().name, p, evaluate_success(*team, factory, n_episodes, seed)});
  }
  return rows;
}

// ---- transfer ------------------------------------------------------------------

std::vector<train::IterationMetrics> transfer_run(Team& team, const lang::TaskEnvFactory& target,
                                                  const train::TrainConfig& cfg, std::uint64_t seed, int iterations) {
  train::Trainer trainer(team, target, cfg, seed);
  std::vector<train::IterationMetrics> out;
  for (int i = 0; i < iterations; ++i) out.push_back(trainer.iterate());
  return out;
}

// ---- embeddings ----------------------------------------------------------------

std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::PostInputMlp: return "post-input-MLP";
    case Layer::PostObsEncoder: return "post-obs-encoder";
    case Layer::PostCommPolicy: return "post-comm-policy";
  }
  return "?";
}

namespace {

Layer layer_from_string(std::string_view s) {
  for (Layer l : {Layer::PostInputMlp, Layer::PostObsEncoder, Layer::PostCommPolicy})
    if (to_string(l) == s) return l;
  throw std::invalid_argument("unknown embedding layer '" + std::string(s) + "'");
}

std::vector<Real> row_vector(const Matrix& m, Index r) {
  std::vector<Real> v(static_cast<std::size_t>(m.cols()));
  for (Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(r, c);
  return v;
}

}  // namespace

std::vector<EmbeddingRecord> export_embeddings(Team& team, const lang::TaskEnvFactory& factory, int n_observations,
                                               std::uint64_t seed) {
  if (n_observations <= 0) throw std::invalid_argument("export_embeddings: n_observations must be positive");
  const auto probe = factory();
  const auto& vocab = probe->vocabulary();
  std::vector<EmbeddingRecord> out;
  nn::Rng rng(episode_seed(seed, ~0ULL));
  const int n = team.n_agents();
  int collected = 0;
  for (std::uint64_t round = 0; collected < n_observations; ++round) {
    const int per_round = 16;
    std::vector<std::unique_ptr<lang::TaskEnv>> envs;
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < per_round; ++k) {
      envs.push_back(factory());
      seeds.push_back(episode_seed(seed, round * per_round + static_cast<std::uint64_t>(k)));
    }
    std::vector<int> lengths;
    std::vector<bool> success;
    run_episodes(
        team, envs, seeds, rng,
        [&](std::span<const int> rows, const agents::TeamStep& ts, const std::vector<std::vector<TokenSeq>>& oracle) {
          for (std::size_t r = 0; r < rows.size() && collected < n_observations; ++r)
            for (int i = 0; i < n && collected < n_observations; ++i) {
              const auto ui = static_cast<std::size_t>(i);
              const auto& a = ts.agents[ui];
              const std::string label = lang::detokenize(oracle[ui][r], vocab);
              const auto ri = static_cast<Index>(r);
              out.push_back({Layer::PostInputMlp, i, label, row_vector(a.post_input_mlp, ri)});
              out.push_back({Layer::PostObsEncoder, i, label, row_vector(a.post_obs_encoder, ri)});
              out.push_back({Layer::PostCommPolicy, i, label, row_vector(a.post_comm_policy, ri)});
              ++collected;
            }
        },
        lengths, success);
  }
  return out;
}

Real silhouette_score(const std::vector<std::vector<Real>>& points, const std::vector<std::string>& labels) {
  const std::size_t n = points.size();
  if (labels.size() != n) throw std::invalid_argument("silhouette_score: one label per point required");
  std::map<std::string, int> ids;
  for (const auto& l : labels) ids.emplace(l, static_cast<int>(ids.size()));
  if (ids.size() < 2) throw std::invalid_argument("silhouette_score: undefined with fewer than two labels");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw std::invalid_argument("silhouette_score: points differ in dimension");
  std::vector<int> cluster(n);
  std::vector<long> size(ids.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    cluster[i] = ids.at(labels[i]);
    ++size[static_cast<std::size_t>(cluster[i])];
  }
  Real total = 0;
  std::vector<Real> sums(ids.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Real d2 = 0;
      for (std::size_t k = 0; k < dim; ++k) d2 += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
      sums[static_cast<std::size_t>(cluster[j])] += std::sqrt(d2);
    }
    const auto own = static_cast<std::size_t>(cluster[i]);
    if (size[own] < 2) continue;
    const Real a = sums[own] / static_cast<Real>(size[own] - 1);
    Real b = std::numeric_limits<Real>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c)
      if (c != own) b = std::min(b, sums[c] / static_cast<Real>(size[c]));
    const Real m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<Real>(n);
}

std::vector<std::pair<Layer, Real>> silhouette_by_layer(const std::vector<EmbeddingRecord>& records) {
  std::vector<std::pair<Layer, Real>> out;
  for (Layer l : {Layer::PostInputMlp, Layer::PostObsEncoder, Layer::PostCommPolicy}) {
    std::vector<std::vector<Real>> pts;
    std::vector<std::string> labels;
    for (const auto& r : records)
      if (r.layer == l) {
        pts.push_back(r.vector);
        labels.push_back(r.label);
      }
    if (!pts.empty()) out.emplace_back(l, silhouette_score(pts, labels));
  }
  return out;
}

void write_embeddings_jsonl(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json{{"schema", "lamarl.embeddings"}, {"version", 1}}.dump() << '\n';
  for (const auto& r : records)
    out << json{{"layer", to_string(r.layer)}, {"agent", r.agent}, {"label", r.label}, {"vector", r.vector}}.dump()
        << '\n';
}

std::vector<EmbeddingRecord> read_embeddings_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line) || json::parse(line).value("schema", "") != "lamarl.embeddings")
    throw std::runtime_error("embeddings: missing schema header in " + path.string());
  std::vector<EmbeddingRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({layer_from_string(j.at("layer").get<std::string>()), j.at("agent").get<int>(),
                   j.at("label").get<std::string>(), j.at("vector").get<std::vector<Real>>()});
  }
  return out;
}

// ---- interaction ---------------------------------------------------------------

Real action_change(Real p_message, Real p_no_message) {
  if (!(p_no_message > 0)) throw std::domain_error("action_change: baseline probability must be positive");
  return p_message / p_no_message - 1.0;
}

std::vector<InteractionRow> interaction_probe(Team& team, const env::GridConfig& config,
                                              const std::vector<std::string>& messages, std::uint64_t seed) {
  const int n = team.n_agents();
  if (config.n_agents != n) throw std::invalid_argument("interaction_probe: config and team disagree on agent count");
  if (!team.variant().uses_tokens())
    throw std::invalid_argument("interaction_probe: '" + team.variant().name + "' does not use token messages");
  lang::GridTaskEnv env(config);
  env.reset(seed);
  const auto& vocab = env.vocabulary();

  std::vector<env::Cell> lattice;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) lattice.push_back({(2 * r + 1) * config.height / 12, (2 * c + 1) * config.width / 12});
  const auto P = static_cast<Index>(lattice.size());

  // Row k places agent i on lattice[(k + i * stride) % 36].
  const int stride = 36 / std::max(n, 1);
  std::vector<Matrix> obs(static_cast<std::size_t>(n), Matrix(P, team.shape().obs_dim));
  std::vector<std::vector<TokenSeq>> oracle(static_cast<std::size_t>(n));
  env::GridState& s = env.state();
  s.preys.clear();
  s.resources.clear();
  for (Index k = 0; k < P; ++k) {
    for (int i = 0; i < n; ++i)
      s.agents[static_cast<std::size_t>(i)] = lattice[static_cast<std::size_t>((k + i * stride) % P)];
    for (int i = 0; i < n; ++i) {
      const auto flat = env::observe(s, i).flatten();
      obs[static_cast<std::size_t>(i)].row(k) = Eigen::Map<const Eigen::RowVectorXd>(flat.data(), static_cast<Index>(flat.size()));
      oracle[static_cast<std::size_t>(i)].push_back(env.describe(i).tokens);
    }
  }

  const int A = team.shape().n_actions;
  auto mean_probs = [&](const std::optional<TokenSeq>& injected) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(A);
    for (int probed = 0; probed < n; ++probed) {
      agents::Overrides ov;
      if (injected) {
        ov.assign(static_cast<std::size_t>(n), std::vector<std::optional<TokenSeq>>(static_cast<std::size_t>(P)));
        for (int j = 0; j < n; ++j)
          if (j != probed)
            for (auto& slot : ov[static_cast<std::size_t>(j)]) slot = *injected;
      }
      agents::StepInput in{obs, &oracle, injected ? &ov : nullptr};
      Hidden h = team.initial_hidden(P);
      nn::Rng rng(seed);
      const auto ts = team.step(in, h, rng, Sampling::Greedy, Sampling::Greedy);
      acc += ts.agents[static_cast<std::size_t>(probed)].action_probs.colwise().mean();
    }
    acc /= static_cast<Real>(n);
    return std::vector<Real>(acc.data(), acc.data() + A);
  };

  const auto baseline = mean_probs(std::nullopt);
  std::vector<InteractionRow> rows;
  for (const auto& text : messages) {
    InteractionRow row;
    row.message = text;
    row.p_message = mean_probs(lang::tokenize(text, vocab).tokens);
    row.p_no_message = baseline;
    for (int a = 0; a < A; ++a)
      row.change.push_back(action_change(row.p_message[static_cast<std::size_t>(a)], baseline[static_cast<std::size_t>(a)]));
    rows.push_back(std::move(row));
  }
  rows.push_back({"", baseline, baseline, std::vector<Real>(static_cast<std::size_t>(A), 0.0)});
  return rows;
}

// ---- reports -------------------------------------------------------------------

namespace {

constexpr const char* kActionNames[] = {"noop", "up", "down", "left", "right"};

void schema_line(std::ostream& out, const char* name) { out << "# schema: lamarl." << name << " v1\n"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

void write_success_csv(std::ostream& out, const std::vector<std::pair<std::string, SuccessReport>>& rows) {
  schema_line(out, "success");
  out << "name,episodes,success_rate,mean_length,mean_tokens_per_message\n";
  const auto old = out.precision(17);
  for (const auto& [name, r] : rows)
    out << csv_field(name) << ',' << r.episodes << ',' << r.success_rate << ',' << r.mean_length << ','
        << r.mean_tokens_per_message << '\n';
  out.precision(old);
}

void write_teaming_csv(std::ostream& out, const std::vector<TeamingRow>& rows) {
  schema_line(out, "teaming");
  out << "variant,pattern,episodes,success_rate,mean_length\n";
  const auto old = out.precision(17);
  for (const auto& r : rows)
    out << csv_field(r.variant) << ',' << r.pattern << ',' << r.report.episodes << ',' << r.report.success_rate << ','
        << r.report.mean_length << '\n';
  out.precision(old);
}

void write_interaction_csv(std::ostream& out, const std::vector<InteractionRow>& rows) {
  schema_line(out, "interaction");
  out << "message";
  for (const char* prefix : {"p_message_", "p_no_message_", "change_"})
    for (const char* a : kActionNames) out << ',' << prefix << a;
  out << '\n';
  const auto old = out.precision(17);
  for (const auto& r : rows) {
    out << csv_field(r.message.empty() ? "none" : r.message);
    for (const auto* v : {&r.p_message, &r.p_no_message, &r.change})
      for (Real x : *v) out << ',' << x;
    out << '\n';
  }
  out.precision(old);
}

void write_silhouette_csv(std::ostream& out, const std::vector<std::pair<Layer, Real>>& rows) {
  schema_line(out, "silhouette");
  out << "layer,silhouette\n";
  const auto old = out.precision(17);
  for (const auto& [l, s] : rows) out << to_string(l) << ',' << s << '\n';
  out.precision(old);
}

}  // namespace lamarl::eval
