#pragma once

// JSON forms of the generator and training configurations, their canonical
// hash, and the manifest written next to every command's outputs.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "gpo/dataio.hpp"
#include "gpo/trainer.hpp"

namespace gpo::config {

using nlohmann::json;

json to_json(const dataio::SynthConfig& c);
json to_json(const trainer::TrainConfig& c);

/// Strict readers: every field must be present with the right type, and
/// unknown fields are rejected. Errors name the offending field.
dataio::SynthConfig synth_from_json(const json& j);
trainer::TrainConfig train_from_json(const json& j);

/// FNV-1a of the compact dump; object keys are sorted, so equal values hash equally.
std::string hash(const json& j);
/// FNV-1a over the bytes of the files, in the given order, with their names.
std::string hash_files(const std::vector<std::filesystem::path>& files);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

inline constexpr const char* kToolVersion = "0.3.0";

struct RunManifest {
  std::string command;
  std::string config_path;  // empty when built-in defaults were used
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string tool_version = kToolVersion;
  json config = json::object();  // the resolved configuration
  json inputs = json::object();  // name -> hash of each input artifact
};

json to_json(const RunManifest& m);
RunManifest manifest_from_json(const json& j);

inline constexpr const char* kManifestFile = "manifest.json";
void write_manifest(const std::filesystem::path& dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& dir);

}  // namespace gpo::config
