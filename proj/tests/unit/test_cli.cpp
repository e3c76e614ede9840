#include <doctest.h>

#include "lamarl/cli/commands.hpp"
#include "lamarl/cli/serve.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

using namespace lamarl;
using namespace lamarl::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("lamarl_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c;
  c.grid = env::GridConfig::predator_prey(12);
  c.grid.n_agents = 2;
  c.grid.n_preys = 1;
  c.grid.episode_limit = 15;
  c.model.hidden_dim = 6;
  c.train.n_parallel_rollouts = 4;
  c.train.ppo_epochs = 2;
  c.train.lang_batch = 16;
  c.train.total_env_steps = 200;
  c.seeds = {5};
  c.out_dir = out.string();
  c.eval_every = 1;
  c.eval_episodes = 4;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Invocation {
  int code = 0;
  std::string out, err;
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "lamarl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Invocation r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path write_config(const ExperimentConfig& c, const fs::path& path) {
  std::ofstream(path) << dump_config(c);
  return path;
}

}  // namespace

TEST_CASE("sha256 matches published test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("experiment config round-trips and rejects bad input") {
  ExperimentConfig c = tiny_config("/tmp/x");
  c.variant = "EC-AutoEncoder";
  c.seeds = {1, 2, 9};
  c.train.literal_clip = true;
  const ExperimentConfig back = experiment_config_from_json(json::parse(dump_config(c)));
  CHECK(back == c);
  CHECK(dump_config(back) == dump_config(c));
  CHECK(experiment_config_from_json(json::object()) == ExperimentConfig{});

  auto bad = [&](const std::function<void(json&)>& edit) {
    json j = to_json(c);
    edit(j);
    CHECK_THROWS_AS(experiment_config_from_json(j), std::invalid_argument);
  };
  bad([](json& j) { j["variant"] = "Telepathy"; });
  bad([](json& j) { j["seeds"] = json::array(); });
  bad([](json& j) { j["seeds"] = {1, 1}; });
  bad([](json& j) { j["colour"] = "blue"; });
  bad([](json& j) { j["grid"]["wdth"] = 3; });
  bad([](json& j) { j["model"]["hidden"] = 3; });
  bad([](json& j) { j["train"]["ppo_epochs"] = 0; });
  bad([](json& j) { j["version"] = 2; });
  bad([](json& j) { j["eval_episodes"] = 0; });
}

TEST_CASE("train without a config is a usage error") {
  const auto r = invoke({"train"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--config") != std::string::npos);
  const auto missing = invoke({"train", "--config", "/nonexistent/lamarl.json"});
  CHECK(missing.code != 0);
  CHECK(invoke({}).code != 0);
  CHECK(invoke({"fly"}).code != 0);
}

TEST_CASE("a completed run holds manifest, checkpoint and metrics, and nothing else") {
  const auto dir = scratch("train");
  const auto cfg_path = write_config(tiny_config(dir / "runs"), dir / "cfg.json");
  const auto r = invoke({"train", "--config", cfg_path.string()});
  REQUIRE(r.code == 0);
  const auto run = dir / "runs" / "seed_5";
  CHECK(r.out == run.string() + "\n");
  for (const char* f : {"manifest.json", "config.json", "metrics.csv", "eval.csv", "checkpoints/final.json",
                        "checkpoints/final.bin"})
    CHECK(fs::exists(run / f));
  const ManifestCheck check = check_manifest(run);
  CHECK(check.orphans.empty());
  CHECK(check.missing.empty());
  CHECK(check.hash_matches);
  const RunManifest m = read_manifest(run);
  CHECK(m.command == "train");
  CHECK(m.seed == 5);
  CHECK(m.code_version == code_version());
  CHECK(m.config_hash == sha256_file(run / "config.json"));
  CHECK(load_experiment_config(run / "config.json").seeds == std::vector<std::uint64_t>{5});
  CHECK(checkpoint_grid(run / "checkpoints" / "final")->n_agents == 2);

  // The stored config is the run's identity: editing it breaks the hash.
  std::ofstream(run / "config.json", std::ios::app) << " ";
  CHECK_FALSE(check_manifest(run).hash_matches);
  std::ofstream(run / "stray.txt") << "x";
  CHECK(check_manifest(run).orphans == std::vector<std::string>{"stray.txt"});
}

TEST_CASE("rerunning a config and seed reproduces the metrics bit for bit") {
  const auto dir = scratch("rerun");
  const auto cfg = tiny_config(dir);
  train_run(cfg, 5, dir / "a");
  train_run(cfg, 5, dir / "b");
  train_run(cfg, 6, dir / "c");
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "eval.csv") == slurp(dir / "b" / "eval.csv"));
  CHECK(slurp(dir / "a" / "checkpoints" / "final.bin") == slurp(dir / "b" / "checkpoints" / "final.bin"));
  CHECK(slurp(dir / "a" / "metrics.csv") != slurp(dir / "c" / "metrics.csv"));
}

TEST_CASE("report commands write their files and list them in a manifest") {
  const auto dir = scratch("reports");
  const auto cfg = tiny_config(dir);
  const auto ckpt = (train_run(cfg, 5, dir / "run").run_dir / "checkpoints" / "final").string();

  const auto ev = invoke({"eval", "--checkpoint", ckpt, "--episodes", "6", "--out", (dir / "eval").string()});
  REQUIRE(ev.code == 0);
  CHECK(slurp(dir / "eval" / "success.csv").find("LAMARL,6,") != std::string::npos);

  const auto in = invoke({"interact", "--checkpoint", ckpt, "--out", (dir / "interact").string()});
  REQUIRE(in.code == 0);
  {
    std::ifstream f(dir / "interact" / "interaction.csv");
    std::string line;
    std::vector<std::string> names;
    std::getline(f, line);
    std::getline(f, line);
    while (std::getline(f, line)) names.push_back(line.substr(0, line.find(',')));
    CHECK(names == std::vector<std::string>{"Prey North", "Prey South", "Prey East", "Prey West", "none"});
  }

  const auto em = invoke({"embeddings", "--checkpoint", ckpt, "--observations", "40", "--out", (dir / "emb").string()});
  REQUIRE(em.code == 0);
  std::set<eval::Layer> layers;
  for (const char* name : {"post-input-MLP", "post-obs-encoder", "post-comm-policy"}) {
    const auto recs = eval::read_embeddings_jsonl(dir / "emb" / ("embeddings_" + std::string(name) + ".jsonl"));
    CHECK(recs.size() == 40);
    for (const auto& r : recs) layers.insert(r.layer);
  }
  CHECK(layers.size() == 3);

  for (const char* sub : {"eval", "interact", "emb"}) {
    const ManifestCheck check = check_manifest(dir / sub);
    CHECK(check.orphans.empty());
    CHECK(check.missing.empty());
    CHECK(check.hash_matches);
  }

  const auto tr = invoke({"transfer", "--checkpoint", ckpt, "--config", write_config(cfg, dir / "t.json").string(),
                       "--out", (dir / "transfer").string()});
  REQUIRE(tr.code == 0);
  CHECK(fs::exists(dir / "transfer" / "checkpoints" / "final.bin"));
  CHECK(check_manifest(dir / "transfer").orphans.empty());
}

TEST_CASE("teaming needs four checkpoints and names the missing teams") {
  const auto r = invoke({"teaming", "--checkpoint", "a", "--checkpoint", "b"});
  CHECK(r.code == 2);
  CHECK(r.err.find("missing teams: C, D") != std::string::npos);
  CHECK(invoke({"teaming"}).err.find("missing teams: A, B, C, D") != std::string::npos);
}

TEST_CASE("four-agent teaming through the command line") {
  const auto dir = scratch("teaming");
  auto cfg = tiny_config(dir);
  cfg.grid.n_agents = 4;
  cfg.train.total_env_steps = 60;
  std::vector<std::string> args{"teaming", "--episodes", "3", "--out", (dir / "team").string()};
  for (std::uint64_t s = 1; s <= 4; ++s) {
    train_run(cfg, s, dir / ("r" + std::to_string(s)));
    args.push_back("--checkpoint");
    args.push_back((dir / ("r" + std::to_string(s)) / "checkpoints" / "final").string());
  }
  const auto r = invoke(args);
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "team" / "teaming.csv");
  for (const auto& p : eval::composition_patterns()) CHECK(csv.find("LAMARL," + p + ",3,") != std::string::npos);
}

TEST_CASE("checkpoint and environment mismatch is reported") {
  const auto dir = scratch("mismatch");
  const auto ckpt = train_run(tiny_config(dir), 5, dir / "run").run_dir / "checkpoints" / "final";
  auto other = env::GridConfig::predator_prey(12);
  other.n_agents = 3;
  CHECK_THROWS_AS(load_checked_team(ckpt, other), std::invalid_argument);
  auto wrong = tiny_config(dir);
  wrong.grid.n_agents = 3;
  const auto r = invoke({"eval", "--checkpoint", ckpt.string(), "--config", write_config(wrong, dir / "w.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("does not match") != std::string::npos);
}

// ---- live session protocol -----------------------------------------------------

namespace {

std::unique_ptr<agents::Team> live_team(const env::GridConfig& g, const std::string& variant = "LAMARL") {
  const lang::GridTaskEnv probe(g);
  return std::make_unique<agents::Team>(agents::variant_from_name(variant), agents::ModelConfig{8, 4, 8, 4},
                                        agents::TeamShape{probe.n_agents(), probe.obs_dim(), probe.n_actions(),
                                                          probe.vocabulary().size()},
                                        3);
}

env::GridConfig live_grid() {
  auto g = env::GridConfig::predator_prey(12);
  g.n_agents = 2;
  g.n_preys = 1;
  g.episode_limit = 6;
  return g;
}

const json* find(const std::vector<json>& frames, const std::string& type) {
  for (const auto& f : frames)
    if (f.at("type") == type) return &f;
  return nullptr;
}

}  // namespace

TEST_CASE("live session: state, pause, resume and versioned frames") {
  LiveSession s(live_team(live_grid()), live_grid(), 4);
  const json hello = s.hello();
  CHECK(hello.at("version") == kProtocolVersion);
  CHECK(hello.at("schema") == "lamarl.serve");
  CHECK(hello.at("vocabulary").size() > 0);

  const auto st = s.handle({{"type", "state"}});
  REQUIRE(st.size() == 1);
  CHECK(st[0].at("type") == "state");
  CHECK(st[0].at("grid") == s.env().snapshot());
  CHECK(st[0].at("step") == 0);

  const auto t1 = s.tick();
  REQUIRE(find(t1, "comm"));
  REQUIRE(find(t1, "state"));
  CHECK(find(t1, "state")->at("step") == 1);
  for (const auto& f : t1) CHECK(f.at("version") == kProtocolVersion);
  for (const auto& a : find(t1, "comm")->at("agents")) {
    double sum = 0;
    for (double p : a.at("action_probs")) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }

  CHECK(s.handle({{"type", "pause"}})[0].at("type") == "ack");
  CHECK(s.paused());
  CHECK(s.tick().empty());
  CHECK(s.tick().empty());
  CHECK(s.handle({{"type", "resume"}})[0].at("type") == "ack");
  const auto t2 = s.tick();
  CHECK(find(t2, "state")->at("step") == 2);
}

TEST_CASE("live session: injected words appear in the next broadcast") {
  LiveSession s(live_team(live_grid()), live_grid(), 4);
  const auto ack = s.handle({{"type", "inject"}, {"agent", 1}, {"tokens", json::array({"Prey", "North"})}});
  REQUIRE(ack.size() == 1);
  CHECK(ack[0].at("type") == "ack");
  const auto frames = s.tick();
  const json& comm = *find(frames, "comm");
  CHECK(comm.at("agents")[1].at("message") == json::array({"Prey", "North"}));
  CHECK(comm.at("agents")[1].at("injected") == true);
  CHECK(comm.at("agents")[0].at("injected") == false);
  const json bc = comm.at("broadcast");
  const auto bar = std::find(bc.begin(), bc.end(), "|");
  REQUIRE(bar != bc.end());
  CHECK(json(std::vector<json>(bar + 1, bc.end())) == json::array({"Prey", "North"}));
  // Injections apply to one step only.
  CHECK(find(s.tick(), "comm")->at("agents")[1].at("injected") == false);

  // Queued while paused, applied on resume.
  s.handle({{"type", "pause"}});
  s.handle({{"type", "inject"}, {"tokens", json::array({"Prey", "South"})}});
  CHECK(s.tick().empty());
  s.handle({{"type", "resume"}});
  const auto resumed = s.tick();
  const json& c2 = *find(resumed, "comm");
  for (const auto& a : c2.at("agents")) CHECK(a.at("message") == json::array({"Prey", "South"}));
}

TEST_CASE("live session: reset replays an episode and episodes roll over") {
  LiveSession s(live_team(live_grid()), live_grid(), 4);
  auto run = [&] {
    std::vector<json> states;
    for (int i = 0; i < 4; ++i)
      for (const auto& f : s.tick())
        if (f.at("type") == "state") states.push_back(f.at("grid"));
    return states;
  };
  const auto r = s.handle({{"type", "reset"}, {"seed", 11}});
  CHECK(r[0].at("type") == "ack");
  CHECK(r[1].at("type") == "state");
  const auto a = run();
  s.handle({{"type", "reset"}, {"seed", 11}});
  CHECK(run() == a);

  bool ended = false;
  for (int i = 0; i < 10 && !ended; ++i) ended = find(s.tick(), "episode_end") != nullptr;
  CHECK(ended);
  const auto next = s.tick();
  CHECK(find(next, "state")->at("step") == 0);
  CHECK(find(next, "state")->at("episode") == 1);
}

TEST_CASE("live session: malformed commands get error frames") {
  LiveSession s(live_team(live_grid()), live_grid(), 4);
  auto err = [&](const json& m) {
    const auto r = s.handle(m);
    return r.size() == 1 && r[0].at("type") == "error";
  };
  CHECK(err(json::array()));
  CHECK(err({{"type", "teleport"}}));
  CHECK(err({{"type", "inject"}, {"tokens", json::array({"Dragon"})}}));
  CHECK(err({{"type", "inject"}, {"tokens", "Prey"}}));
  CHECK(err({{"type", "inject"}, {"agent", 7}, {"tokens", json::array({"Prey"})}}));
  CHECK(err({{"type", "inject"}, {"tokens", json::array({"Prey", "Prey", "Prey", "Prey", "Prey", "Prey", "Prey", "Prey"})}}));
  CHECK(err({{"type", "reset"}, {"seed", -1}}));
  CHECK(err({{"type", "pause"}, {"version", 99}}));
  LiveSession silent(live_team(live_grid(), "No Comm"), live_grid(), 4);
  const auto r = silent.handle({{"type", "inject"}, {"tokens", json::array({"Prey"})}});
  CHECK(r[0].at("type") == "error");
}

TEST_CASE("websocket server speaks the protocol and leaves the checkpoint alone") {
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  namespace asio = boost::asio;
  const auto dir = scratch("serve");
  auto cfg = tiny_config(dir);
  const auto ckpt = train_run(cfg, 5, dir / "run").run_dir / "checkpoints" / "final";
  const std::string before = slurp(ckpt.string() + ".bin") + slurp(ckpt.string() + ".json");

  LiveSession session(load_checked_team(ckpt, cfg.grid), cfg.grid, 2);
  Server server(session, 0, 20);
  CHECK_THROWS_AS(Server(session, server.port(), 20), std::runtime_error);
  std::thread loop([&] { server.run(); });

  asio::io_context ioc;
  asio::ip::tcp::socket sock(ioc);
  sock.connect({asio::ip::make_address("127.0.0.1"), server.port()});
  websocket::stream<asio::ip::tcp::socket> ws(std::move(sock));
  ws.handshake("127.0.0.1", "/");
  auto next = [&] {
    beast::flat_buffer b;
    ws.read(b);
    return json::parse(beast::buffers_to_string(b.data()));
  };
  auto next_of = [&](const std::string& type) {
    for (int i = 0; i < 500; ++i) {
      json f = next();
      if (f.at("type") == type) return f;
    }
    FAIL("no " << type << " frame");
    return json();
  };
  CHECK(next().at("type") == "hello");
  CHECK(next().at("type") == "state");

  ws.write(asio::buffer(json{{"type", "inject"}, {"agent", "all"}, {"tokens", json::array({"Prey", "North"})}}.dump()));
  next_of("ack");
  const json comm = next_of("comm");
  for (const auto& a : comm.at("agents")) CHECK(a.at("message") == json::array({"Prey", "North"}));

  ws.write(asio::buffer(json{{"type", "pause"}}.dump()));
  next_of("ack");
  ws.write(asio::buffer(json{{"type", "state"}}.dump()));
  const int paused_step = next_of("state").at("step");
  std::this_thread::sleep_for(std::chrono::milliseconds(120));
  ws.write(asio::buffer(json{{"type", "state"}}.dump()));
  CHECK(next_of("state").at("step") == paused_step);
  ws.write(asio::buffer(json{{"type", "resume"}}.dump()));
  next_of("ack");
  next_of("comm");

  ws.write(asio::buffer(std::string("{not json")));
  CHECK(next_of("error").at("message").get<std::string>().find("invalid JSON") != std::string::npos);

  ws.close(websocket::close_code::normal);
  server.stop();
  loop.join();
  CHECK(slurp(ckpt.string() + ".bin") + slurp(ckpt.string() + ".json") == before);
}
