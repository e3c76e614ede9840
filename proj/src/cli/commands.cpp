#include "lamarl/cli/commands.hpp"

#include "lamarl/cli/serve.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace lamarl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrainerSalt = 0x5bd1e9955bd1e995ULL;
constexpr std::uint64_t kEvalSalt = 0xc2b2ae3d27d4eb4fULL;

agents::TeamShape shape_of(const lang::TaskEnv& e) {
  return {e.n_agents(), e.obs_dim(), e.n_actions(), e.vocabulary().size()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << bytes;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_eval_header(std::ostream& out) {
  out << "# schema: lamarl.eval_trace v1\n"
      << "iteration,env_steps,episodes,success_rate,mean_length,mean_tokens_per_message\n";
}

void write_eval_row(std::ostream& out, int iteration, long steps, const eval::SuccessReport& r) {
  const auto old = out.precision(17);
  out << iteration << ',' << steps << ',' << r.episodes << ',' << r.success_rate << ',' << r.mean_length << ','
      << r.mean_tokens_per_message << '\n';
  out.precision(old);
}

std::vector<std::string> checkpoint_files(const std::string& stem) { return {stem + ".json", stem + ".bin"}; }

}  // namespace

fs::path run_dir_for(const fs::path& out, std::uint64_t seed) { return out / ("seed_" + std::to_string(seed)); }

std::optional<env::GridConfig> checkpoint_grid(const fs::path& checkpoint) {
  const json meta = agents::read_team_metadata(checkpoint);
  if (!meta.contains("grid")) return std::nullopt;
  return env::config_from_json(meta.at("grid"));
}

std::unique_ptr<agents::Team> load_checked_team(const fs::path& checkpoint, const env::GridConfig& grid) {
  auto team = agents::load_team(checkpoint);
  const lang::GridTaskEnv probe(grid);
  if (shape_of(probe) != team->shape())
    throw std::invalid_argument("checkpoint " + checkpoint.string() + " (" + team->variant().name + ", " +
                                std::to_string(team->n_agents()) +
                                " agents) does not match the environment's agents, observations or vocabulary");
  return team;
}

TrainResult train_run(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& run_dir,
                      const ProgressFn& progress) {
  cfg.validate();
  const auto start = std::chrono::system_clock::now();
  fs::create_directories(run_dir / "checkpoints");

  ExperimentConfig stored = cfg;
  stored.seeds = {seed};
  stored.out_dir = run_dir.parent_path().generic_string();
  const std::string config_bytes = dump_config(stored);
  write_file(run_dir / "config.json", config_bytes);

  const auto factory = lang::grid_factory(cfg.grid);
  const auto probe = factory();
  agents::Team team(agents::variant_from_name(cfg.variant), cfg.model, shape_of(*probe), seed);
  train::Trainer trainer(team, factory, cfg.train, seed ^ kTrainerSalt);

  auto metrics_out = open_out(run_dir / "metrics.csv");
  train::write_metrics_header(metrics_out);
  auto eval_out = open_out(run_dir / "eval.csv");
  write_eval_header(eval_out);

  TrainResult result;
  result.run_dir = run_dir;
  const std::uint64_t eval_seed = seed ^ kEvalSalt;
  trainer.run([&](const train::IterationMetrics& m) {
    train::write_metrics_row(metrics_out, m);
    metrics_out.flush();
    result.metrics.push_back(m);
    if (progress) progress(m);
    if (cfg.eval_every > 0 && (m.iteration + 1) % cfg.eval_every == 0) {
      write_eval_row(eval_out, m.iteration, m.env_steps,
                     eval::evaluate_success(team, factory, cfg.eval_episodes, eval_seed));
      eval_out.flush();
    }
  });
  result.final_eval = eval::evaluate_success(team, factory, cfg.eval_episodes, eval_seed);
  write_eval_row(eval_out, trainer.iteration(), trainer.env_steps(), result.final_eval);
  eval_out.close();
  metrics_out.close();

  agents::save_team(run_dir / "checkpoints" / "final", team,
                    {{"grid", env::to_json(cfg.grid)}, {"seed", seed}, {"config_hash", sha256_hex(config_bytes)}});

  RunManifest m;
  m.command = "train";
  m.config_hash = sha256_hex(config_bytes);
  m.code_version = code_version();
  m.start_time = iso_time(start);
  m.end_time = iso_time(std::chrono::system_clock::now());
  m.seed = seed;
  m.checkpoints = checkpoint_files("checkpoints/final");
  m.metrics = {"metrics.csv", "eval.csv"};
  write_manifest(run_dir, m);
  return result;
}

// ---- command line --------------------------------------------------------------

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> checkpoints;
  std::optional<int> episodes;
  int port = 8765;
  int tick_ms = 250;
  int observations = 5000;
};

env::GridConfig resolve_grid(const Options& o, const fs::path& checkpoint) {
  if (!o.config.empty()) return load_experiment_config(o.config).grid;
  if (auto g = checkpoint_grid(checkpoint)) return *g;
  throw UsageError("checkpoint " + checkpoint.string() + " carries no environment; pass --config");
}

// Report directory holding a manifest plus the given report files.
struct ReportDir {
  fs::path dir;
  RunManifest manifest;
  std::string config_bytes;

  ReportDir(const std::string& command, const fs::path& out, const json& inputs) : dir(out) {
    fs::create_directories(dir);
    manifest.command = command;
    manifest.code_version = code_version();
    manifest.start_time = iso_time(std::chrono::system_clock::now());
    config_bytes = inputs.dump(2) + "\n";
    write_file(dir / "config.json", config_bytes);
    manifest.config_hash = sha256_hex(config_bytes);
  }
  fs::path report(const std::string& name) {
    manifest.reports.push_back(name);
    return dir / name;
  }
  void finish(std::ostream& out) {
    manifest.end_time = iso_time(std::chrono::system_clock::now());
    write_manifest(dir, manifest);
    for (const auto& r : manifest.reports) out << (dir / r).string() << '\n';
    for (const auto& r : manifest.checkpoints) out << (dir / r).string() << '\n';
  }
};

std::string one_checkpoint(const Options& o) {
  if (o.checkpoints.size() != 1) throw UsageError("exactly one --checkpoint is required");
  return o.checkpoints.front();
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.config.empty()) throw UsageError("train requires --config");
  ExperimentConfig cfg = load_experiment_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.episodes) cfg.eval_episodes = *o.episodes;
  for (std::uint64_t seed : cfg.seeds) {
    const auto dir = run_dir_for(cfg.out_dir, seed);
    err << "training " << cfg.variant << " seed " << seed << " -> " << dir.string() << '\n';
    const auto r = train_run(cfg, seed, dir, [&](const train::IterationMetrics& m) {
      err << "  iter " << m.iteration << " steps " << m.env_steps << " success " << m.success_rate << '\n';
    });
    err << "  final success " << r.final_eval.success_rate << " over " << r.final_eval.episodes << " episodes\n";
    out << dir.string() << '\n';
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const std::string ckpt = one_checkpoint(o);
  const auto grid = resolve_grid(o, ckpt);
  auto team = load_checked_team(ckpt, grid);
  const int episodes = o.episodes.value_or(1000);
  const std::uint64_t seed = o.seed.value_or(0);
  ReportDir rd("eval", o.out.empty() ? "eval" : o.out,
               {{"checkpoint", ckpt}, {"grid", env::to_json(grid)}, {"episodes", episodes}, {"seed", seed}});
  const auto rep = eval::evaluate_success(*team, lang::grid_factory(grid), episodes, seed);
  auto f = open_out(rd.report("success.csv"));
  eval::write_success_csv(f, {{team->variant().name, rep}});
  f.close();
  rd.finish(out);
  return 0;
}

int cmd_teaming(const Options& o, std::ostream& out) {
  if (o.checkpoints.size() < 4) {
    std::string missing;
    for (std::size_t i = o.checkpoints.size(); i < 4; ++i)
      missing += (missing.empty() ? "" : ", ") + std::string(1, static_cast<char>('A' + i));
    throw UsageError("teaming needs 4 independently trained checkpoints (--checkpoint x4); missing teams: " + missing);
  }
  const auto grid = resolve_grid(o, o.checkpoints.front());
  std::vector<std::unique_ptr<agents::Team>> teams;
  std::vector<const agents::Team*> src;
  for (const auto& c : o.checkpoints) {
    teams.push_back(load_checked_team(c, grid));
    src.push_back(teams.back().get());
  }
  const int episodes = o.episodes.value_or(1000);
  const std::uint64_t seed = o.seed.value_or(0);
  ReportDir rd("teaming", o.out.empty() ? "teaming" : o.out,
               {{"checkpoints", o.checkpoints}, {"grid", env::to_json(grid)}, {"episodes", episodes}, {"seed", seed}});
  const auto rows = eval::zero_shot_eval(src, lang::grid_factory(grid), episodes, seed);
  auto f = open_out(rd.report("teaming.csv"));
  eval::write_teaming_csv(f, rows);
  f.close();
  rd.finish(out);
  return 0;
}

int cmd_transfer(const Options& o, std::ostream& out, std::ostream& err) {
  const std::string ckpt = one_checkpoint(o);
  if (o.config.empty()) throw UsageError("transfer requires --config describing the target environment");
  const ExperimentConfig cfg = load_experiment_config(o.config);
  auto team = load_checked_team(ckpt, cfg.grid);
  const std::uint64_t seed = o.seed.value_or(cfg.seeds.front());
  ReportDir rd("transfer", o.out.empty() ? "transfer" : o.out,
               {{"checkpoint", ckpt}, {"experiment", to_json(cfg)}, {"seed", seed}});
  rd.manifest.seed = seed;
  const auto factory = lang::grid_factory(cfg.grid);
  train::Trainer trainer(*team, factory, cfg.train, seed ^ kTrainerSalt);
  auto metrics = open_out(rd.dir / "metrics.csv");
  rd.manifest.metrics.push_back("metrics.csv");
  train::write_metrics_header(metrics);
  trainer.run([&](const train::IterationMetrics& m) {
    train::write_metrics_row(metrics, m);
    err << "  iter " << m.iteration << " steps " << m.env_steps << " success " << m.success_rate << '\n';
  });
  metrics.close();
  fs::create_directories(rd.dir / "checkpoints");
  agents::save_team(rd.dir / "checkpoints" / "final", *team, {{"grid", env::to_json(cfg.grid)}, {"seed", seed}});
  rd.manifest.checkpoints = checkpoint_files("checkpoints/final");
  const auto rep = eval::evaluate_success(*team, factory, o.episodes.value_or(cfg.eval_episodes), seed ^ kEvalSalt);
  auto f = open_out(rd.report("success.csv"));
  eval::write_success_csv(f, {{team->variant().name, rep}});
  f.close();
  rd.finish(out);
  return 0;
}

int cmd_embeddings(const Options& o, std::ostream& out) {
  const std::string ckpt = one_checkpoint(o);
  const auto grid = resolve_grid(o, ckpt);
  auto team = load_checked_team(ckpt, grid);
  const std::uint64_t seed = o.seed.value_or(0);
  ReportDir rd("embeddings", o.out.empty() ? "embeddings" : o.out,
               {{"checkpoint", ckpt}, {"grid", env::to_json(grid)}, {"observations", o.observations}, {"seed", seed}});
  const auto records = eval::export_embeddings(*team, lang::grid_factory(grid), o.observations, seed);
  for (eval::Layer l : {eval::Layer::PostInputMlp, eval::Layer::PostObsEncoder, eval::Layer::PostCommPolicy}) {
    std::vector<eval::EmbeddingRecord> part;
    for (const auto& r : records)
      if (r.layer == l) part.push_back(r);
    eval::write_embeddings_jsonl(rd.report("embeddings_" + std::string(eval::to_string(l)) + ".jsonl"), part);
  }
  auto f = open_out(rd.report("silhouette.csv"));
  eval::write_silhouette_csv(f, eval::silhouette_by_layer(records));
  f.close();
  rd.finish(out);
  return 0;
}

int cmd_interact(const Options& o, std::ostream& out) {
  const std::string ckpt = one_checkpoint(o);
  const auto grid = resolve_grid(o, ckpt);
  auto team = load_checked_team(ckpt, grid);
  const std::uint64_t seed = o.seed.value_or(0);
  ReportDir rd("interact", o.out.empty() ? "interact" : o.out,
               {{"checkpoint", ckpt}, {"grid", env::to_json(grid)}, {"seed", seed}});
  const auto rows = eval::interaction_probe(*team, grid, eval::directional_messages(), seed);
  auto f = open_out(rd.report("interaction.csv"));
  eval::write_interaction_csv(f, rows);
  f.close();
  rd.finish(out);
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const std::string ckpt = one_checkpoint(o);
  const auto grid = resolve_grid(o, ckpt);
  auto team = load_checked_team(ckpt, grid);
  LiveSession session(std::move(team), grid, o.seed.value_or(0));
  Server server(session, static_cast<unsigned short>(o.port), o.tick_ms);
  out << "serving " << ckpt << " on ws://127.0.0.1:" << server.port() << '\n' << std::flush;
  server.run();
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"lamarl: language-augmented multi-agent reinforcement learning"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)");
    sub->add_option("--seed", o.seed, "Seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--checkpoint", o.checkpoints, "Team checkpoint (stem or .json manifest)");
    sub->add_option("--episodes", o.episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  };
  auto* train = app.add_subcommand("train", "Train one run per seed");
  auto* evalc = app.add_subcommand("eval", "Success rate of a checkpoint");
  auto* teaming = app.add_subcommand("teaming", "Zero-shot teaming across 4 checkpoints");
  auto* transfer = app.add_subcommand("transfer", "Continue training on another environment");
  auto* embeddings = app.add_subcommand("embeddings", "Export labeled layer embeddings");
  auto* interact = app.add_subcommand("interact", "Directional message injection probe");
  auto* serve = app.add_subcommand("serve", "Live episode over a websocket");
  for (auto* s : {train, evalc, teaming, transfer, embeddings, interact, serve}) add_common(s);
  embeddings->add_option("--observations", o.observations, "Observations to embed")->check(CLI::PositiveNumber);
  serve->add_option("--port", o.port, "TCP port (0 = any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--tick-ms", o.tick_ms, "Milliseconds between steps")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train) return cmd_train(o, out, err);
    if (*evalc) return cmd_eval(o, out);
    if (*teaming) return cmd_teaming(o, out);
    if (*transfer) return cmd_transfer(o, out, err);
    if (*embeddings) return cmd_embeddings(o, out);
    if (*interact) return cmd_interact(o, out);
    if (*serve) return cmd_serve(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace lamarl::cli
