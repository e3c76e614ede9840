#include "lamarl/lang/task_env.hpp"

#include <fstream>
#include <stdexcept>

namespace lamarl::lang {

using nlohmann::json;

GridTaskEnv::GridTaskEnv(env::GridConfig config)
    : config_(std::move(config)), vocab_(Vocabulary::for_task(config_.task)) {
  config_.validate();
  state_ = env::reset(config_, config_.seed).state;
}

namespace {
std::vector<FlatObs> flatten_all(const env::JointObservation& obs) {
  std::vector<FlatObs> out;
  out.reserve(obs.size());
  for (const auto& o : obs) out.push_back(o.flatten());
  return out;
}
}  // namespace

std::vector<FlatObs> GridTaskEnv::reset(std::uint64_t seed) {
  auto r = env::reset(config_, seed);
  state_ = std::move(r.state);
  return flatten_all(r.observations);
}

TaskStep GridTaskEnv::step(std::span<const int> actions) {
  std::vector<env::Action> acts;
  acts.reserve(actions.size());
  for (int a : actions) {
    if (a < 0 || a >= env::kNumActions) throw std::out_of_range("GridTaskEnv: action out of range");
    acts.push_back(static_cast<env::Action>(a));
  }
  const env::StepResult r = env::step(state_, acts);
  return TaskStep{flatten_all(r.observations), r.reward, r.done, r.success};
}

Description GridTaskEnv::describe(int agent) const { return lang::describe(state_, agent, vocab_); }

json GridTaskEnv::snapshot() const { return env::to_json(state_); }

std::unique_ptr<TaskEnv> GridTaskEnv::clone() const { return std::make_unique<GridTaskEnv>(*this); }

TaskEnvFactory grid_factory(const env::GridConfig& config) {
  return [config]() { return std::make_unique<GridTaskEnv>(config); };
}

RolloutPolicy uniform_random_policy(int n_actions) {
  return [n_actions](const std::vector<FlatObs>& obs, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, n_actions - 1);
    std::vector<int> a(obs.size());
    for (int& x : a) x = pick(rng);
    return a;
  };
}

std::vector<CorpusPair> corpus_generate(TaskEnv& env, const RolloutPolicy& policy, std::size_t n_pairs,
                                        std::uint64_t seed, CorpusKind kind) {
  std::vector<CorpusPair> out;
  if (n_pairs == 0) return out;
  std::mt19937_64 rng(seed);
  std::vector<FlatObs> obs = env.reset(rng());
  const int n = env.n_agents();
  while (out.size() < n_pairs) {
    if (kind == CorpusKind::PerAgent) {
      for (int i = 0; i < n && out.size() < n_pairs; ++i)
        out.push_back({obs[static_cast<std::size_t>(i)], env.describe(i)});
    } else {
      CorpusPair joint;
      std::vector<std::vector<TokenId>> msgs;
      for (int i = 0; i < n; ++i) {
        const auto& o = obs[static_cast<std::size_t>(i)];
        joint.obs.insert(joint.obs.end(), o.begin(), o.end());
        msgs.push_back(env.describe(i).tokens);
      }
      joint.description.tokens = join_messages(msgs, env.vocabulary());
      out.push_back(std::move(joint));
    }
    const auto actions = policy(obs, rng);
    const TaskStep s = env.step(actions);
    obs = s.done ? env.reset(rng()) : s.observations;
  }
  return out;
}

void write_corpus_jsonl(const std::filesystem::path& path, std::span<const CorpusPair> pairs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus " + path.string());
  out << json{{"schema", "lamarl.corpus"}, {"version", 1}}.dump() << '\n';
  for (const auto& p : pairs) out << json{{"obs", p.obs}, {"tokens", p.description.tokens}}.dump() << '\n';
}

std::vector<CorpusPair> read_corpus_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus " + path.string());
  std::string line;
  if (!std::getline(in, line) || json::parse(line).value("schema", "") != "lamarl.corpus")
    throw std::runtime_error("corpus: missing schema header");
  std::vector<CorpusPair> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({j.at("obs").get<FlatObs>(), Description{j.at("tokens").get<std::vector<TokenId>>()}});
  }
  return out;
}

}  // namespace lamarl::lang
