#pragma once

#include "lamarl/agents/team.hpp"
#include "lamarl/env/grid_world.hpp"

#include <map>
#include <memory>

namespace lamarl::cli {

inline constexpr int kProtocolVersion = 1;

/// One live episode driven by a trained team. Pure protocol logic: the server
/// feeds it client messages and ticks; it returns the frames to broadcast.
///
/// Client -> server: {type:"inject", agent?: index|"all", tokens:[words]},
/// {type:"pause"}, {type:"resume"}, {type:"reset", seed?}, {type:"state"}.
/// Server -> client: "hello", "ack", "error", "state", "comm", "episode_end".
/// Every server frame carries {"version": kProtocolVersion}.
class LiveSession {
 public:
  LiveSession(std::unique_ptr<agents::Team> team, const env::GridConfig& grid, std::uint64_t seed);

  nlohmann::json hello() const;
  nlohmann::json state_frame() const;

  /// Replies to the sending client; injections queue until the next tick.
  std::vector<nlohmann::json> handle(const nlohmann::json& message);
  /// Advances one step unless paused: comm frame, state frame, and
  /// episode_end when the episode finishes (the next tick starts a new one).
  std::vector<nlohmann::json> tick();

  bool paused() const { return paused_; }
  const agents::Team& team() const { return *team_; }
  const lang::GridTaskEnv& env() const { return env_; }

 private:
  void reset(std::uint64_t seed);
  void start_episode(std::uint64_t seed);

  std::unique_ptr<agents::Team> team_;
  lang::GridTaskEnv env_;
  std::vector<lang::FlatObs> obs_;
  agents::Hidden hidden_;
  nn::Rng rng_;
  std::uint64_t seed_ = 0;
  int episode_ = 0;
  double reward_ = 0;
  bool paused_ = false;
  bool finished_ = false;
  std::map<int, agents::TokenSeq> pending_;
};

/// Websocket front end: one stepping loop plus any number of clients, all on
/// one thread. Frames returned by tick() go to every client.
class Server {
 public:
  /// Binds 127.0.0.1:port (0 picks a free port). Throws std::runtime_error when busy.
  Server(LiveSession& session, unsigned short port, int tick_ms);
  ~Server();

  unsigned short port() const;
  /// Blocks until stop().
  void run();
  /// Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lamarl::cli
