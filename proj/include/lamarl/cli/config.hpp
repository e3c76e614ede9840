#pragma once

#include "lamarl/agents/team.hpp"
#include "lamarl/env/grid_world.hpp"
#include "lamarl/train/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

namespace lamarl::cli {

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
  env::GridConfig grid;
  std::string variant = "LAMARL";
  agents::ModelConfig model;
  train::TrainConfig train;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "runs";
  /// Evaluate every this many iterations (0 = only at the end).
  int eval_every = 0;
  int eval_episodes = 1000;

  /// Throws std::invalid_argument on an unknown variant, empty seeds or bad sub-configs.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Every field is written, so the dump doubles as the defaults reference.
nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys take defaults; unknown keys are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical serialization (sorted keys, 2-space indent, trailing newline).
std::string dump_config(const ExperimentConfig& c);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string code_version();
/// UTC, ISO 8601 with seconds.
std::string iso_time(std::chrono::system_clock::time_point t);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string code_version;
  std::string start_time;
  std::string end_time;
  std::uint64_t seed = 0;
  /// Relative to the run directory.
  std::vector<std::string> checkpoints;
  std::vector<std::string> metrics;
  std::vector<std::string> reports;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& run_dir);

/// Files of the run directory missing from the manifest, and manifest entries
/// missing on disk (both relative). Empty when the run is consistent.
struct ManifestCheck {
  std::vector<std::string> orphans;
  std::vector<std::string> missing;
  bool hash_matches = false;
};
ManifestCheck check_manifest(const std::filesystem::path& run_dir);

}  // namespace lamarl::cli
