#include "lamarl/cli/serve.hpp"

#include "lamarl/eval/eval.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <set>

namespace lamarl::cli {

using nlohmann::json;

namespace {

json frame(const char* type) { return {{"type", type}, {"version", kProtocolVersion}}; }

json error_frame(const std::string& message) {
  json f = frame("error");
  f["message"] = message;
  return f;
}

json words_of(const agents::TokenSeq& tokens, const lang::Vocabulary& vocab) {
  json out = json::array();
  for (int t : tokens) {
    if (t == vocab.eos()) break;
    out.push_back(t == vocab.pad() ? "|" : vocab.word(t));
  }
  return out;
}

}  // namespace

LiveSession::LiveSession(std::unique_ptr<agents::Team> team, const env::GridConfig& grid, std::uint64_t seed)
    : team_(std::move(team)), env_(grid), rng_(seed) {
  if (!team_) throw std::invalid_argument("live session: no team");
  reset(seed);
}

void LiveSession::reset(std::uint64_t seed) {
  seed_ = seed;
  episode_ = 0;
  start_episode(seed);
}

void LiveSession::start_episode(std::uint64_t seed) {
  obs_ = env_.reset(seed);
  hidden_ = team_->initial_hidden(1);
  rng_.seed(seed);
  reward_ = 0;
  finished_ = false;
}

json LiveSession::hello() const {
  json f = frame("hello");
  f["schema"] = "lamarl.serve";
  f["variant"] = team_->variant().name;
  f["n_agents"] = team_->n_agents();
  f["vocabulary"] = env_.vocabulary().words();
  f["max_message_length"] = team_->model().max_message_length - 1;
  f["injectable"] = team_->variant().uses_tokens();
  json actions = json::array();
  for (int a = 0; a < env::kNumActions; ++a) actions.push_back(env::to_string(static_cast<env::Action>(a)));
  f["actions"] = actions;
  f["paused"] = paused_;
  return f;
}

json LiveSession::state_frame() const {
  json f = frame("state");
  f["grid"] = env_.snapshot();
  f["step"] = env_.state().step;
  f["reward"] = reward_;
  f["episode"] = episode_;
  f["seed"] = seed_;
  f["paused"] = paused_;
  return f;
}

std::vector<json> LiveSession::handle(const json& msg) {
  if (!msg.is_object() || !msg.contains("type") || !msg.at("type").is_string())
    return {error_frame("message must be an object with a string 'type'")};
  if (msg.contains("version") && msg.at("version") != kProtocolVersion)
    return {error_frame("unsupported protocol version " + msg.at("version").dump())};
  const std::string type = msg.at("type").get<std::string>();
  json ack = frame("ack");
  ack["command"] = type;

  if (type == "pause" || type == "resume") {
    paused_ = type == "pause";
    return {ack};
  }
  if (type == "state") return {state_frame()};
  if (type == "reset") {
    std::uint64_t seed = seed_;
    if (msg.contains("seed")) {
      const json& js = msg.at("seed");
      if (!js.is_number_unsigned() && !(js.is_number_integer() && js.get<long long>() >= 0))
        return {error_frame("reset: seed must be a non-negative integer")};
      seed = msg.at("seed").get<std::uint64_t>();
    }
    reset(seed);
    return {ack, state_frame()};
  }
  if (type == "inject") {
    if (!team_->variant().uses_tokens())
      return {error_frame("variant '" + team_->variant().name + "' does not use token messages")};
    if (!msg.contains("tokens") || !msg.at("tokens").is_array())
      return {error_frame("inject: 'tokens' must be an array of words")};
    const auto& vocab = env_.vocabulary();
    agents::TokenSeq tokens;
    for (const json& w : msg.at("tokens")) {
      if (!w.is_string() || !vocab.contains(w.get<std::string>()))
        return {error_frame("inject: " + w.dump() + " is not in the task vocabulary")};
      tokens.push_back(vocab.id(w.get<std::string>()));
    }
    if (static_cast<int>(tokens.size()) > team_->model().max_message_length - 1)
      return {error_frame("inject: at most " + std::to_string(team_->model().max_message_length - 1) + " words")};
    tokens.push_back(vocab.eos());
    std::vector<int> targets;
    const json agent = msg.value("agent", json("all"));
    if (agent == "all") {
      for (int i = 0; i < team_->n_agents(); ++i) targets.push_back(i);
    } else if (agent.is_number_integer() && agent.get<int>() >= 0 && agent.get<int>() < team_->n_agents()) {
      targets.push_back(agent.get<int>());
    } else {
      return {error_frame("inject: agent must be \"all\" or an index below " + std::to_string(team_->n_agents()))};
    }
    for (int i : targets) pending_[i] = tokens;
    ack["queued"] = targets;
    return {ack};
  }
  return {error_frame("unknown message type '" + type + "'")};
}

std::vector<json> LiveSession::tick() {
  if (paused_) return {};
  if (finished_) {
    ++episode_;
    start_episode(eval::episode_seed(seed_, static_cast<std::uint64_t>(episode_)));
    return {state_frame()};
  }
  const int n = team_->n_agents();
  const auto& vocab = env_.vocabulary();

  agents::StepInput in;
  std::vector<std::vector<agents::TokenSeq>> oracle(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& o = obs_[static_cast<std::size_t>(i)];
    in.obs.push_back(Eigen::Map<const Eigen::RowVectorXd>(o.data(), static_cast<nn::Index>(o.size())));
    oracle[static_cast<std::size_t>(i)].push_back(env_.describe(i).tokens);
  }
  in.oracle = &oracle;
  agents::Overrides overrides;
  if (!pending_.empty()) {
    overrides.assign(static_cast<std::size_t>(n), std::vector<std::optional<agents::TokenSeq>>(1));
    for (const auto& [agent, tokens] : pending_) overrides[static_cast<std::size_t>(agent)][0] = tokens;
    in.overrides = &overrides;
  }
  const auto ts = team_->step(in, hidden_, rng_, agents::Sampling::Sample, agents::Sampling::Greedy);

  json comm = frame("comm");
  comm["step"] = env_.state().step;
  json per_agent = json::array();
  std::vector<int> actions(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto& a = ts.agents[ui];
    actions[ui] = a.actions[0];
    json entry{{"agent", i}, {"action", env::to_string(static_cast<env::Action>(a.actions[0]))}};
    entry["injected"] = pending_.count(i) > 0;
    if (!ts.messages.empty()) {
      const auto& m = pending_.count(i) ? pending_.at(i) : ts.messages[ui][0];
      entry["message"] = words_of(m, vocab);
      entry["text"] = lang::detokenize(m, vocab);
    }
    std::vector<double> probs(a.action_probs.data(), a.action_probs.data() + a.action_probs.size());
    entry["action_probs"] = probs;
    per_agent.push_back(entry);
  }
  comm["agents"] = per_agent;
  if (!ts.broadcast.empty()) comm["broadcast"] = words_of(ts.broadcast[0], vocab);
  pending_.clear();

  lang::TaskStep s = env_.step(actions);
  reward_ += s.reward;
  obs_ = std::move(s.observations);
  std::vector<json> out{comm, state_frame()};
  if (s.done) {
    finished_ = true;
    json end = frame("episode_end");
    end["success"] = s.success;
    end["step"] = env_.state().step;
    end["reward"] = reward_;
    end["episode"] = episode_;
    out.push_back(end);
  }
  return out;
}

// ---- websocket server ----------------------------------------------------------

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace asio = boost::asio;
using tcp = asio::ip::tcp;

struct Server::Impl {
  struct Client : std::enable_shared_from_this<Client> {
    Client(tcp::socket socket, Impl& owner) : ws(std::move(socket)), impl(owner) {}

    websocket::stream<beast::tcp_stream> ws;
    Impl& impl;
    beast::flat_buffer buffer;
    std::deque<std::string> queue;

    void start() {
      ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        self->impl.clients.insert(self);
        self->send(self->impl.session.hello().dump());
        self->send(self->impl.session.state_frame().dump());
        self->read();
      });
    }

    void read() {
      ws.async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->impl.clients.erase(self);
          return;
        }
        const std::string text = beast::buffers_to_string(self->buffer.data());
        self->buffer.consume(self->buffer.size());
        std::vector<json> replies;
        try {
          replies = self->impl.session.handle(json::parse(text));
        } catch (const json::exception& e) {
          replies = {error_frame(std::string("invalid JSON: ") + e.what())};
        }
        for (const json& r : replies) {
          if (r.at("type") == "state")
            self->impl.broadcast(r.dump());
          else
            self->send(r.dump());
        }
        self->read();
      });
    }

    void send(std::string text) {
      queue.push_back(std::move(text));
      if (queue.size() == 1) write();
    }

    void write() {
      ws.text(true);
      ws.async_write(asio::buffer(queue.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
          self->impl.clients.erase(self);
          return;
        }
        self->queue.pop_front();
        if (!self->queue.empty()) self->write();
      });
    }
  };

  Impl(LiveSession& s, unsigned short port, int tick) : session(s), acceptor(ioc), timer(ioc), tick_ms(tick) {
    try {
      const tcp::endpoint ep(asio::ip::make_address("127.0.0.1"), port);
      acceptor.open(ep.protocol());
      acceptor.set_option(asio::socket_base::reuse_address(true));
      acceptor.bind(ep);
      acceptor.listen();
    } catch (const boost::system::system_error& e) {
      throw std::runtime_error("cannot listen on port " + std::to_string(port) + ": " + e.code().message());
    }
  }

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<Client>(std::move(socket), *this)->start();
      accept();
    });
  }

  void schedule() {
    timer.expires_after(std::chrono::milliseconds(tick_ms));
    timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      for (const json& f : session.tick()) broadcast(f.dump());
      schedule();
    });
  }

  void broadcast(const std::string& text) {
    for (const auto& c : std::vector<std::shared_ptr<Client>>(clients.begin(), clients.end())) c->send(text);
  }

  LiveSession& session;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  int tick_ms;
  std::set<std::shared_ptr<Client>> clients;
};

Server::Server(LiveSession& session, unsigned short port, int tick_ms) {
  if (tick_ms <= 0) throw std::invalid_argument("serve: tick must be positive");
  impl_ = std::make_unique<Impl>(session, port, tick_ms);
}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  impl_->accept();
  impl_->schedule();
  impl_->ioc.run();
}

void Server::stop() { impl_->ioc.stop(); }

}  // namespace lamarl::cli
