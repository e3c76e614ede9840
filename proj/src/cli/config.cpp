#include "lamarl/cli/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#ifndef LAMARL_VERSION
#define LAMARL_VERSION "0.0.0"
#endif
#ifndef LAMARL_GIT_REVISION
#define LAMARL_GIT_REVISION "unknown"
#endif

namespace lamarl::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument(std::string(where) + ": unknown key '" + key + "'");
}

}  // namespace

void ExperimentConfig::validate() const {
  agents::variant_from_name(variant);
  if (seeds.empty()) throw std::invalid_argument("experiment config: seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw std::invalid_argument("experiment config: seeds must be distinct");
  if (out_dir.empty()) throw std::invalid_argument("experiment config: out_dir must not be empty");
  if (eval_every < 0) throw std::invalid_argument("experiment config: eval_every must be >= 0");
  if (eval_episodes < 1) throw std::invalid_argument("experiment config: eval_episodes must be positive");
  grid.validate();
  train.validate();
}

json to_json(const ExperimentConfig& c) {
  return {{"version", kConfigVersion},
          {"grid", env::to_json(c.grid)},
          {"variant", c.variant},
          {"model", agents::to_json(c.model)},
          {"train", train::to_json(c.train)},
          {"seeds", c.seeds},
          {"out_dir", c.out_dir},
          {"eval_every", c.eval_every},
          {"eval_episodes", c.eval_episodes}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  reject_unknown(j, {"version", "grid", "variant", "model", "train", "seeds", "out_dir", "eval_every", "eval_episodes"},
                 "experiment config");
  if (j.value("version", kConfigVersion) != kConfigVersion)
    throw std::invalid_argument("experiment config: unsupported version " + j.at("version").dump());
  ExperimentConfig c;
  if (j.contains("grid")) {
    reject_unknown(j.at("grid"), {"task", "size", "width", "height", "n_agents", "episode_limit", "seed", "n_preys"},
                   "grid config");
    c.grid = env::config_from_json(j.at("grid"));
  }
  if (j.contains("model")) {
    reject_unknown(j.at("model"), {"hidden_dim", "token_embed_dim", "max_message_length", "langground_dim"},
                   "model config");
    c.model = agents::model_config_from_json(j.at("model"));
  }
  if (j.contains("train")) c.train = train::train_config_from_json(j.at("train"));
  c.variant = j.value("variant", c.variant);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.out_dir = j.value("out_dir", c.out_dir);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

std::string dump_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

// ---- hashing -------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

std::string code_version() { return std::string(LAMARL_VERSION) + "+" + LAMARL_GIT_REVISION; }

std::string iso_time(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

// ---- manifest ------------------------------------------------------------------

json to_json(const RunManifest& m) {
  return {{"schema", "lamarl.manifest"}, {"version", 1},          {"command", m.command},
          {"config_hash", m.config_hash},  {"code_version", m.code_version}, {"start_time", m.start_time},
          {"end_time", m.end_time},        {"seed", m.seed},          {"checkpoints", m.checkpoints},
          {"metrics", m.metrics},          {"reports", m.reports}};
}

RunManifest manifest_from_json(const json& j) {
  if (j.value("schema", "") != "lamarl.manifest") throw std::invalid_argument("not a lamarl run manifest");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.code_version = j.at("code_version").get<std::string>();
  m.start_time = j.at("start_time").get<std::string>();
  m.end_time = j.at("end_time").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  m.metrics = j.at("metrics").get<std::vector<std::string>>();
  m.reports = j.at("reports").get<std::vector<std::string>>();
  return m;
}

void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m) {
  std::ofstream out(run_dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + run_dir.string());
  out << to_json(m).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw std::runtime_error("no manifest.json in " + run_dir.string());
  return manifest_from_json(json::parse(in));
}

ManifestCheck check_manifest(const std::filesystem::path& run_dir) {
  const RunManifest m = read_manifest(run_dir);
  std::set<std::string> listed{"manifest.json", "config.json"};
  for (const auto* group : {&m.checkpoints, &m.metrics, &m.reports}) listed.insert(group->begin(), group->end());
  ManifestCheck check;
  std::set<std::string> present;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(run_dir))
    if (entry.is_regular_file()) present.insert(std::filesystem::relative(entry.path(), run_dir).generic_string());
  for (const auto& f : present)
    if (!listed.count(f)) check.orphans.push_back(f);
  for (const auto& f : listed)
    if (!present.count(f)) check.missing.push_back(f);
  check.hash_matches = present.count("config.json") && sha256_file(run_dir / "config.json") == m.config_hash;
  return check;
}

}  // namespace lamarl::cli
