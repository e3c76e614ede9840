#include "lamarl/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

namespace lamarl::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void put_le(std::vector<char>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

fs::path blob_path_for(const fs::path& manifest) {
  fs::path b = manifest;
  b.replace_extension(".bin");
  return b;
}

}  // namespace

fs::path manifest_path_for(const fs::path& stem_or_manifest) {
  if (stem_or_manifest.extension() == ".json") return stem_or_manifest;
  fs::path m = stem_or_manifest;
  m += ".json";
  return m;
}

fs::path save_checkpoint(const fs::path& stem, const std::vector<const ParamArray*>& params, const json& metadata) {
  const fs::path manifest = manifest_path_for(stem);
  const fs::path blob = blob_path_for(manifest);
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());

  std::vector<char> bytes;
  json tensors = json::array();
  for (const ParamArray* p : params) {
    const std::uint64_t offset = bytes.size();
    for (Index k = 0; k < p->value.size(); ++k) put_le(bytes, p->value.data()[k]);
    tensors.push_back({{"name", p->name},
                       {"shape", {p->value.rows(), p->value.cols()}},
                       {"offset", offset},
                       {"nbytes", bytes.size() - offset}});
  }
  json doc = {{"format", "lamarl-checkpoint"},
              {"version", kCheckpointVersion},
              {"dtype", "float64"},
              {"byte_order", "little"},
              {"blob", blob.filename().string()},
              {"tensors", tensors},
              {"metadata", metadata}};

  std::ofstream b(blob, std::ios::binary | std::ios::trunc);
  if (!b) throw std::runtime_error("checkpoint: cannot write " + blob.string());
  b.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ofstream m(manifest, std::ios::trunc);
  if (!m) throw std::runtime_error("checkpoint: cannot write " + manifest.string());
  m << doc.dump(2) << '\n';
  return manifest;
}

CheckpointManifest read_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + manifest_path.string());
  const json doc = json::parse(in);
  if (doc.value("format", "") != "lamarl-checkpoint") throw std::runtime_error("checkpoint: unknown format");
  if (doc.value("version", 0) != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version");
  if (doc.value("dtype", "") != "float64") throw std::runtime_error("checkpoint: unsupported dtype");
  CheckpointManifest out;
  for (const json& t : doc.at("tensors")) {
    out.tensors.push_back({t.at("name").get<std::string>(), t.at("shape").at(0).get<Index>(),
                           t.at("shape").at(1).get<Index>(), t.at("offset").get<std::uint64_t>(),
                           t.at("nbytes").get<std::uint64_t>()});
  }
  out.metadata = doc.value("metadata", json::object());
  return out;
}

CheckpointManifest load_checkpoint(const fs::path& manifest_path, const std::vector<ParamArray*>& params) {
  const fs::path manifest = manifest_path_for(manifest_path);
  CheckpointManifest mf = read_manifest(manifest);
  std::ifstream b(blob_path_for(manifest), std::ios::binary);
  if (!b) throw std::runtime_error("checkpoint: missing blob for " + manifest.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());

  std::unordered_map<std::string, const CheckpointManifest::Entry*> by_name;
  for (const auto& e : mf.tensors) by_name.emplace(e.name, &e);
  for (ParamArray* p : params) {
    const auto it = by_name.find(p->name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing tensor " + p->name);
    const auto& e = *it->second;
    if (e.rows != p->value.rows() || e.cols != p->value.cols())
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name + " (stored " + std::to_string(e.rows) +
                               "x" + std::to_string(e.cols) + ", expected " + std::to_string(p->value.rows()) + "x" +
                               std::to_string(p->value.cols()) + ")");
    if (e.nbytes != static_cast<std::uint64_t>(p->value.size()) * 8 || e.offset + e.nbytes > bytes.size())
      throw std::runtime_error("checkpoint: corrupt extent for " + p->name);
    for (Index k = 0; k < p->value.size(); ++k) p->value.data()[k] = get_le(bytes.data() + e.offset + 8 * k);
    p->zero_grad();
  }
  return mf;
}

}  // namespace lamarl::nn
