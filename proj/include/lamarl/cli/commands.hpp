#pragma once

#include "lamarl/cli/config.hpp"
#include "lamarl/eval/eval.hpp"

#include <functional>
#include <iosfwd>
#include <optional>

namespace lamarl::cli {

/// Raised for bad invocations; run_cli maps it to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::filesystem::path run_dir_for(const std::filesystem::path& out, std::uint64_t seed);

using ProgressFn = std::function<void(const train::IterationMetrics&)>;

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<train::IterationMetrics> metrics;
  eval::SuccessReport final_eval;
};

/// One training run. Writes config.json, metrics.csv, eval.csv,
/// checkpoints/final.{json,bin} and manifest.json into `run_dir`.
TrainResult train_run(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& run_dir,
                      const ProgressFn& progress = {});

/// Loads a team and checks it against the environment's shape.
std::unique_ptr<agents::Team> load_checked_team(const std::filesystem::path& checkpoint, const env::GridConfig& grid);

/// Grid stored with a checkpoint written by train_run.
std::optional<env::GridConfig> checkpoint_grid(const std::filesystem::path& checkpoint);

/// Entry point of the `lamarl` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lamarl::cli
