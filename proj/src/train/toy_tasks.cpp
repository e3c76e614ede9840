#include "lamarl/train/toy_tasks.hpp"

#include <stdexcept>

namespace lamarl::train {

CorridorEnv::CorridorEnv(int length, int episode_limit)
    : length_(length), limit_(episode_limit), vocab_(std::vector<std::string>{"Goal"}) {
  if (length < 2 || episode_limit < 1) throw std::invalid_argument("CorridorEnv: bad size");
}

std::vector<lang::FlatObs> CorridorEnv::observe() const {
  lang::FlatObs o(static_cast<std::size_t>(length_), 0.0);
  o[static_cast<std::size_t>(pos_)] = 1.0;
  return {o};
}

std::vector<lang::FlatObs> CorridorEnv::reset(std::uint64_t) {
  pos_ = 0;
  t_ = 0;
  done_ = false;
  return observe();
}

lang::TaskStep CorridorEnv::step(std::span<const int> actions) {
  if (done_) throw std::logic_error("CorridorEnv: episode already finished");
  if (actions.size() != 1) throw std::invalid_argument("CorridorEnv: one action required");
  ++t_;
  if (actions[0] == static_cast<int>(env::Action::Left)) pos_ = std::max(0, pos_ - 1);
  if (actions[0] == static_cast<int>(env::Action::Right)) pos_ = std::min(length_ - 1, pos_ + 1);
  const bool success = pos_ == length_ - 1;
  done_ = success || t_ >= limit_;
  return {observe(), success ? 1.0 : 0.0, done_, success};
}

lang::Description CorridorEnv::describe(int) const {
  lang::Description d;
  if (length_ - 1 - pos_ <= 2) d.tokens.push_back(vocab_.id("Goal"));
  d.tokens.push_back(vocab_.eos());
  return d;
}

nlohmann::json CorridorEnv::snapshot() const { return {{"position", pos_}, {"step", t_}, {"done", done_}}; }

BanditEnv::BanditEnv(int n_agents, int rewarded_action)
    : n_agents_(n_agents), rewarded_(rewarded_action), vocab_(std::vector<std::string>{"Reward"}) {
  if (n_agents < 1 || rewarded_action < 0 || rewarded_action >= 5) throw std::invalid_argument("BanditEnv: bad setup");
}

std::vector<lang::FlatObs> BanditEnv::reset(std::uint64_t) {
  done_ = false;
  return std::vector<lang::FlatObs>(static_cast<std::size_t>(n_agents_), lang::FlatObs{1.0, 0.0});
}

lang::TaskStep BanditEnv::step(std::span<const int> actions) {
  if (done_) throw std::logic_error("BanditEnv: episode already finished");
  if (static_cast<int>(actions.size()) != n_agents_) throw std::invalid_argument("BanditEnv: one action per agent");
  int hits = 0;
  for (int a : actions) hits += a == rewarded_ ? 1 : 0;
  done_ = true;
  return {std::vector<lang::FlatObs>(static_cast<std::size_t>(n_agents_), lang::FlatObs{0.0, 1.0}),
          static_cast<double>(hits) / n_agents_, true, hits == n_agents_};
}

lang::Description BanditEnv::describe(int) const { return lang::Description{{vocab_.id("Reward"), vocab_.eos()}}; }

nlohmann::json BanditEnv::snapshot() const { return {{"done", done_}}; }

}  // namespace lamarl::train
