#include "gpo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace gpo::config {

namespace {

class Reader {
 public:
  Reader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
    if (!j_.is_object()) throw ConfigError(what_ + ": expected a JSON object");
  }

  const json& field(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) throw ConfigError(what_ + ": missing field '" + key + "'");
    return *it;
  }

  void read(const std::string& key, double& out) {
    const json& v = field(key);
    if (!v.is_number()) fail(key, "a number");
    out = v.get<double>();
  }
  void read(const std::string& key, Index& out) {
    const json& v = field(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    out = v.get<Index>();
  }
  void read(const std::string& key, int& out) {
    const json& v = field(key);
    if (!v.is_number_integer()) fail(key, "an integer");
    out = v.get<int>();
  }
  void read(const std::string& key, std::uint64_t& out) {
    const json& v = field(key);
    if (!v.is_number_unsigned()) fail(key, "a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void read(const std::string& key, std::vector<std::string>& out) {
    const json& v = field(key);
    if (!v.is_array()) fail(key, "an array of strings");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_string()) fail(key, "an array of strings");
      out.push_back(e.get<std::string>());
    }
  }
  std::string read_string(const std::string& key) {
    const json& v = field(key);
    if (!v.is_string()) fail(key, "a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(what_ + ": unknown field '" + key + "'");
  }

 private:
  [[noreturn]] void fail(const std::string& key, const char* expected) const {
    throw ConfigError(what_ + ": field '" + key + "' must be " + expected);
  }

  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const dataio::SynthConfig& c) {
  return {{"n_perturbed", c.n_perturbed},
          {"n_extended", c.n_extended},
          {"n_measured", c.n_measured},
          {"n_cells", c.n_cells},
          {"edge_density", c.edge_density},
          {"knockdown_strength", c.knockdown_strength},
          {"artifact_rate", c.artifact_rate},
          {"dispersion", c.dispersion},
          {"control_fraction", c.control_fraction},
          {"min_edge_weight", c.min_edge_weight},
          {"max_edge_weight", c.max_edge_weight},
          {"negative_edge_fraction", c.negative_edge_fraction},
          {"min_base_mean", c.min_base_mean},
          {"max_base_mean", c.max_base_mean},
          {"library_log_sd", c.library_log_sd},
          {"artifact_log_sd", c.artifact_log_sd},
          {"seed", c.seed}};
}

dataio::SynthConfig synth_from_json(const json& j) {
  Reader r(j, "synthesis config");
  dataio::SynthConfig c;
  r.read("n_perturbed", c.n_perturbed);
  r.read("n_extended", c.n_extended);
  r.read("n_measured", c.n_measured);
  r.read("n_cells", c.n_cells);
  r.read("edge_density", c.edge_density);
  r.read("knockdown_strength", c.knockdown_strength);
  r.read("artifact_rate", c.artifact_rate);
  r.read("dispersion", c.dispersion);
  r.read("control_fraction", c.control_fraction);
  r.read("min_edge_weight", c.min_edge_weight);
  r.read("max_edge_weight", c.max_edge_weight);
  r.read("negative_edge_fraction", c.negative_edge_fraction);
  r.read("min_base_mean", c.min_base_mean);
  r.read("max_base_mean", c.max_base_mean);
  r.read("library_log_sd", c.library_log_sd);
  r.read("artifact_log_sd", c.artifact_log_sd);
  r.read("seed", c.seed);
  r.finish();
  c.validate();
  return c;
}

json to_json(const trainer::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"graph_learning_rate", c.graph_learning_rate},
          {"clip_norm", c.clip_norm},
          {"latent_dim", c.latent_dim},
          {"encoder_hidden", c.encoder_hidden},
          {"encoder_layers", c.encoder_layers},
          {"effect_hidden", c.effect_hidden},
          {"k_hops", c.k_hops},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"kl_weight", c.kl_weight},
          {"mask_prior", c.mask_prior},
          {"temperature_start", c.temperature_start},
          {"temperature_end", c.temperature_end},
          {"anneal_fraction", c.anneal_fraction},
          {"seed", c.seed},
          {"ablation", objective::to_string(c.ablation)},
          {"train_fraction", c.train_fraction},
          {"val_fraction", c.val_fraction},
          {"holdout", c.holdout}};
}

trainer::TrainConfig train_from_json(const json& j) {
  Reader r(j, "training config");
  trainer::TrainConfig c;
  r.read("epochs", c.epochs);
  r.read("batch_size", c.batch_size);
  r.read("learning_rate", c.learning_rate);
  r.read("graph_learning_rate", c.graph_learning_rate);
  r.read("clip_norm", c.clip_norm);
  r.read("latent_dim", c.latent_dim);
  r.read("encoder_hidden", c.encoder_hidden);
  r.read("encoder_layers", c.encoder_layers);
  r.read("effect_hidden", c.effect_hidden);
  r.read("k_hops", c.k_hops);
  r.read("alpha", c.alpha);
  r.read("beta", c.beta);
  r.read("kl_weight", c.kl_weight);
  r.read("mask_prior", c.mask_prior);
  r.read("temperature_start", c.temperature_start);
  r.read("temperature_end", c.temperature_end);
  r.read("anneal_fraction", c.anneal_fraction);
  r.read("seed", c.seed);
  const std::string ablation = r.read_string("ablation");
  try {
    c.ablation = objective::parse_ablation(ablation);
  } catch (const Error& e) {
    throw ConfigError("training config: field 'ablation': " + std::string(e.what()));
  }
  r.read("train_fraction", c.train_fraction);
  r.read("val_fraction", c.val_fraction);
  r.read("holdout", c.holdout);
  r.finish();
  c.validate();
  return c;
}

std::string hash(const json& j) { return fnv1a_hex(j.dump()); }

std::string hash_files(const std::vector<std::filesystem::path>& files) {
  std::string bytes;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw Error("cannot read " + f.string());
    std::ostringstream content;
    content << in.rdbuf();
    bytes += f.filename().string();
    bytes += '\0';
    bytes += content.str();
    bytes += '\0';
  }
  return fnv1a_hex(bytes);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for " + path.string());
}

json to_json(const RunManifest& m) {
  return {{"command", m.command},         {"config_path", m.config_path}, {"config_hash", m.config_hash},
          {"seed", m.seed},               {"output_dir", m.output_dir},   {"tool_version", m.tool_version},
          {"config", m.config},           {"inputs", m.inputs}};
}

RunManifest manifest_from_json(const json& j) {
  Reader r(j, "manifest");
  RunManifest m;
  m.command = r.read_string("command");
  m.config_path = r.read_string("config_path");
  m.config_hash = r.read_string("config_hash");
  r.read("seed", m.seed);
  m.output_dir = r.read_string("output_dir");
  m.tool_version = r.read_string("tool_version");
  m.config = r.field("config");
  m.inputs = r.field("inputs");
  r.finish();
  return m;
}

void write_manifest(const std::filesystem::path& dir, const RunManifest& m) { write_json(dir / kManifestFile, to_json(m)); }

RunManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestFile;
  if (!std::filesystem::exists(path)) throw ConfigError("no " + std::string(kManifestFile) + " in " + dir.string());
  return manifest_from_json(read_json(path));
}

}  // namespace gpo::config
