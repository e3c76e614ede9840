#pragma once

#include "lamarl/nn/tape.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <vector>

namespace lamarl::nn {

/// Parameter container: `<stem>.json` manifest (names, shapes, dtype, byte
/// offsets, free-form metadata) next to a `<stem>.bin` blob of little-endian
/// IEEE-754 float64 values, column-major per tensor.
struct CheckpointManifest {
  struct Entry {
    std::string name;
    Index rows = 0;
    Index cols = 0;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
  };
  std::vector<Entry> tensors;
  nlohmann::json metadata;
};

inline constexpr int kCheckpointVersion = 1;

/// Writes `<stem>.json` + `<stem>.bin`; returns the manifest path.
std::filesystem::path save_checkpoint(const std::filesystem::path& stem, const std::vector<const ParamArray*>& params,
                                      const nlohmann::json& metadata = nlohmann::json::object());

CheckpointManifest read_manifest(const std::filesystem::path& manifest_path);

/// Loads values into `params` by name; throws on a missing name or shape mismatch.
CheckpointManifest load_checkpoint(const std::filesystem::path& manifest_path, const std::vector<ParamArray*>& params);

/// Manifest path for a stem, accepting either the stem or the .json path itself.
std::filesystem::path manifest_path_for(const std::filesystem::path& stem_or_manifest);

}  // namespace lamarl::nn
