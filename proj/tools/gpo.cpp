// gpo: simulate data, train, extract the network, predict and evaluate.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpo/config.hpp"
#include "gpo/evalharness.hpp"
#include "gpo/grn.hpp"
#include "gpo/inference.hpp"
#include "gpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace gpo;
using nlohmann::json;

namespace {

constexpr const char* kFinalCheckpoint = "model.ckpt.json";
constexpr const char* kBestCheckpoint = "best.ckpt.json";
constexpr const char* kSplitFile = "split.json";

std::vector<fs::path> dataset_files(const fs::path& dir) {
  const auto p = dataio::DatasetPaths::in_directory(dir);
  return {p.expression, p.treatments, p.qc, p.catalog};
}

void check_output_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw Error("cannot create output directory " + out.string());
  const auto probe = out / ".write-probe";
  std::ofstream test(probe);
  if (!test) throw Error("output directory " + out.string() + " is not writable");
  test.close();
  fs::remove(probe);
}

// ---- training overrides ----------------------------------------------------------

struct TrainFlags {
  std::optional<int> epochs;
  std::optional<Index> batch_size, latent_dim;
  std::optional<double> learning_rate, graph_learning_rate, alpha, beta, mask_prior;
  std::optional<int> k_hops;
  std::optional<std::string> ablation;
  std::vector<std::string> holdout;

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch_size, "mini-batch size");
    app->add_option("--lr", learning_rate, "learning rate of the network parameters");
    app->add_option("--graph-lr", graph_learning_rate, "learning rate of the causal logits");
    app->add_option("--latent-dim", latent_dim, "latent dimension d");
    app->add_option("--k-hops", k_hops, "K of the multi-hop accumulation");
    app->add_option("--alpha", alpha, "weight of the artifact term");
    app->add_option("--beta-gpo", beta, "weight of the graph objective");
    app->add_option("--mask-prior", mask_prior, "Bernoulli prior of the mask");
    app->add_option("--ablation", ablation, "full | sp_only | dge_only | dge_k_only");
    app->add_option("--holdout", holdout, "perturbations removed from training")->delimiter(',');
  }

  void apply(trainer::TrainConfig& c) const {
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (graph_learning_rate) c.graph_learning_rate = *graph_learning_rate;
    if (latent_dim) c.latent_dim = *latent_dim;
    if (k_hops) c.k_hops = *k_hops;
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (mask_prior) c.mask_prior = *mask_prior;
    if (ablation) c.ablation = objective::parse_ablation(*ablation);
    if (!holdout.empty()) c.holdout = holdout;
  }
};

trainer::TrainConfig resolve_train_config(const std::string& config_path, const TrainFlags& flags,
                                          std::optional<std::uint64_t> seed) {
  trainer::TrainConfig c = config_path.empty() ? trainer::TrainConfig{} : config::train_from_json(config::read_json(config_path));
  flags.apply(c);
  if (seed) c.seed = *seed;
  c.validate();
  return c;
}

// ---- trained runs ----------------------------------------------------------------

struct TrainedRun {
  config::RunManifest manifest;
  model::ModelState state;
  dataio::DatasetSplits splits;
};

std::string train_hash(const trainer::TrainConfig& c, const std::string& data_hash) {
  return config::hash({{"train", config::to_json(c)}, {"data", data_hash}});
}

json split_to_json(const dataio::DatasetSplits& s) {
  return {{"train_rows", s.train_rows}, {"val_rows", s.val_rows}, {"test_rows", s.test_rows}};
}

/// Trains on `data_dir` and writes checkpoints, history, split and manifest to `out`.
TrainedRun run_training(const fs::path& data_dir, const trainer::TrainConfig& cfg, const fs::path& out,
                        const std::string& config_path) {
  check_output_dir(out);
  const auto data = dataio::load_dataset(dataio::DatasetPaths::in_directory(data_dir));
  const std::string data_hash = config::hash_files(dataset_files(data_dir));
  const std::string hash = train_hash(cfg, data_hash);

  TrainedRun run;
  run.splits = dataio::split_dataset(data, cfg.seed, cfg.holdout, cfg.train_fraction, cfg.val_fraction);
  const auto result = trainer::train(run.splits, cfg);

  model::save_checkpoint(out / kFinalCheckpoint, result.final_state, hash);
  model::save_checkpoint(out / kBestCheckpoint, result.best_state, hash);
  config::write_json(out / kSplitFile, split_to_json(run.splits));
  {
    std::ofstream hist(out / "history.jsonl", std::ios::binary);
    long e = 0;
    for (const auto& rec : result.history.epochs) {
      std::string line = objective::to_json_line(rec.train, e++);
      char buf[96];
      std::snprintf(buf, sizeof buf, ",\"val_elbo\":%.17g,\"temperature\":%.17g}", rec.val_elbo, rec.temperature);
      line.pop_back();
      hist << line << buf << '\n';
    }
    // Wall-clock times vary between runs and are kept out of the reproducible outputs.
    std::ofstream timing(out / "timing.tsv", std::ios::binary);
    timing << "epoch\tseconds\n";
    for (const auto& rec : result.history.epochs) timing << rec.epoch << '\t' << rec.seconds << '\n';
    if (!hist || !timing) throw Error("cannot write training history to " + out.string());
  }

  run.manifest.command = "train";
  run.manifest.config_path = config_path;
  run.manifest.config_hash = hash;
  run.manifest.seed = cfg.seed;
  run.manifest.output_dir = out.string();
  run.manifest.config = config::to_json(cfg);
  run.manifest.config["best_epoch"] = result.history.best_epoch;
  run.manifest.inputs = {{"data", data_hash}};
  config::write_manifest(out, run.manifest);
  run.state = result.final_state;
  return run;
}

/// Loads a trained run, verifying the checkpoint against the manifest and,
/// when given, the dataset against the one used for training.
TrainedRun load_run(const fs::path& model_dir, const std::string& which, const std::optional<fs::path>& data_dir) {
  TrainedRun run;
  run.manifest = config::read_manifest(model_dir);
  if (run.manifest.command != "train") throw ConfigError(model_dir.string() + " does not hold a training run");
  const std::string file = which == "best" ? kBestCheckpoint : which == "final" ? kFinalCheckpoint : "";
  if (file.empty()) throw ConfigError("--checkpoint must be 'final' or 'best'");
  run.state = model::load_checkpoint(model_dir / file, run.manifest.config_hash);
  if (data_dir) {
    const std::string data_hash = config::hash_files(dataset_files(*data_dir));
    if (run.manifest.inputs.value("data", "") != data_hash)
      throw ConfigError("dataset in " + data_dir->string() + " differs from the one the model was trained on");
    const auto data = dataio::load_dataset(dataio::DatasetPaths::in_directory(*data_dir));
    const json split = config::read_json(model_dir / kSplitFile);
    run.splits.train_rows = split.at("train_rows").get<std::vector<Index>>();
    run.splits.val_rows = split.at("val_rows").get<std::vector<Index>>();
    run.splits.test_rows = split.at("test_rows").get<std::vector<Index>>();
    run.splits.train = data.subset(run.splits.train_rows);
    run.splits.val = data.subset(run.splits.val_rows);
    run.splits.test = data.subset(run.splits.test_rows);
  }
  return run;
}

grn::Restrict parse_restrict(const std::string& s) {
  if (s == "all") return grn::Restrict::all;
  if (s == "perturbed") return grn::Restrict::perturbed_only;
  throw ConfigError("--restrict must be 'all' or 'perturbed'");
}

/// Graph from an edge list; a ground-truth file (signed weights) gives probability 1 per edge.
grn::GrnGraph graph_from_file(const fs::path& path, const dataio::GeneCatalog& catalog, double threshold) {
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  const auto names = catalog.causal_names();
  const Index t = catalog.n_causal();
  Matrix prob = Matrix::Zero(t, t);
  if (header == "source\ttarget\tweight") {
    const auto truth = dataio::load_ground_truth(path, catalog);
    prob = (truth.adjacency.array() != 0.0).cast<double>().matrix();
  } else {
    for (const auto& e : grn::import_edges(path)) {
      const auto s = catalog.causal_position(e.source), d = catalog.causal_position(e.target);
      if (!s || !d) throw ValidationError(path.string() + ": edge " + e.source + "->" + e.target + " names an unknown gene");
      prob(*s, *d) = e.probability;
    }
  }
  return grn::make_graph(names, catalog.n_perturbed(), prob, threshold);
}

// ---- commands ----------------------------------------------------------------------

int cmd_simulate(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& out) {
  dataio::SynthConfig c = config_path.empty() ? dataio::SynthConfig{} : config::synth_from_json(config::read_json(config_path));
  if (seed) c.seed = *seed;
  c.validate();
  check_output_dir(out);
  const auto [data, truth] = dataio::synthesize_dataset(c);
  dataio::save_dataset(data, dataio::DatasetPaths::in_directory(out));
  dataio::save_ground_truth(truth, data.catalog, out / "truth.tsv");
  config::RunManifest m;
  m.command = "simulate";
  m.config_path = config_path;
  m.config = config::to_json(c);
  m.config_hash = config::hash(m.config);
  m.seed = c.seed;
  m.output_dir = out.string();
  config::write_manifest(out, m);
  std::printf("simulated %ld cells x %ld genes, %zu true edges -> %s\n", static_cast<long>(data.n_cells()),
              static_cast<long>(data.catalog.n_genes()), truth.edge_set().size(), out.string().c_str());
  return 0;
}

int cmd_train(const fs::path& data_dir, const std::string& config_path, const TrainFlags& flags,
              std::optional<std::uint64_t> seed, const fs::path& out) {
  const auto cfg = resolve_train_config(config_path, flags, seed);
  const auto run = run_training(data_dir, cfg, out, config_path);
  std::printf("trained %d epochs (%s) -> %s\n", cfg.epochs, objective::to_string(cfg.ablation).c_str(),
              (out / kFinalCheckpoint).string().c_str());
  return 0;
}

int cmd_grn(const fs::path& model_dir, const std::string& which, double threshold, const std::string& restrict,
            const fs::path& out) {
  const auto run = load_run(model_dir, which, std::nullopt);
  check_output_dir(out);
  const auto graph = grn::extract_grn(run.state, threshold, parse_restrict(restrict));
  grn::export_edges(graph, out / "edges.tsv");
  config::write_json(out / "degrees.json", grn::to_json(grn::degree_stats(graph)));
  config::RunManifest m;
  m.command = "grn";
  m.config = {{"threshold", threshold}, {"restrict", restrict}, {"checkpoint", which}};
  m.config_hash = run.manifest.config_hash;
  m.seed = run.manifest.seed;
  m.output_dir = out.string();
  m.inputs = {{"model", run.manifest.config_hash}};
  config::write_manifest(out, m);
  std::printf("%zu edges above %g -> %s\n", graph.edges.size(), threshold, (out / "edges.tsv").string().c_str());
  return 0;
}

int cmd_predict(const fs::path& model_dir, const fs::path& data_dir, const std::string& which,
                std::vector<std::string> treatments, Index particles, std::optional<std::uint64_t> seed,
                const fs::path& out) {
  const auto run = load_run(model_dir, which, data_dir);
  check_output_dir(out);
  const std::uint64_t s = seed.value_or(run.manifest.seed);
  const auto& test = run.splits.test;
  if (treatments.empty()) {
    const auto held = run.manifest.config.value("holdout", std::vector<std::string>{});
    if (!held.empty()) {
      treatments = held;
    } else {
      const auto names = test.catalog.causal_names();
      for (Index p = 0; p < test.catalog.n_perturbed(); ++p)
        if (!test.rows_with_treatment(p).empty()) treatments.push_back(names[static_cast<std::size_t>(p)]);
    }
  }
  std::vector<inference::UnseenPrediction> preds;
  json summary = json::array();
  for (const auto& t : treatments) {
    preds.push_back(inference::predict_unseen(run.state, t, test, particles, s));
    const auto& u = preds.back();
    auto j = inference::to_json(u.prediction, run.state.gene_names);
    const auto rho = eval::ate_pearson(u.prediction.ate, u.observed);
    j["observed_rows"] = u.observed_rows;
    j["ate_pearson"] = rho ? json(*rho) : json(nullptr);
    summary.push_back(std::move(j));
  }
  inference::export_predictions(preds, run.state.gene_names, out / "predictions.tsv");
  config::write_json(out / "ate.json", summary);
  config::RunManifest m;
  m.command = "predict";
  m.config = {{"treatments", treatments}, {"particles", particles}, {"checkpoint", which}};
  m.config_hash = run.manifest.config_hash;
  m.seed = s;
  m.output_dir = out.string();
  m.inputs = {{"model", run.manifest.config_hash}, {"data", run.manifest.inputs.value("data", "")}};
  config::write_manifest(out, m);
  std::printf("%zu treatments predicted -> %s\n", treatments.size(), (out / "predictions.tsv").string().c_str());
  return 0;
}

int cmd_eval(const std::optional<fs::path>& model_dir, const fs::path& data_dir, const std::string& which,
             const std::optional<fs::path>& graph_path, double threshold, const eval::EvalOptions& base,
             std::optional<std::uint64_t> seed, const fs::path& out) {
  if (!model_dir && !graph_path) throw ConfigError("eval needs --model, --graph, or both");
  check_output_dir(out);
  const auto data = dataio::load_dataset(dataio::DatasetPaths::in_directory(data_dir));
  eval::EvalOptions opt = base;
  std::optional<TrainedRun> run;
  if (model_dir) run = load_run(*model_dir, which, data_dir);
  opt.seed = seed.value_or(run ? run->manifest.seed : 0);

  const grn::GrnGraph graph =
      graph_path ? graph_from_file(*graph_path, data.catalog, threshold) : grn::extract_grn(run->state, threshold);
  // Response metrics use the held-out test rows; graph metrics use every row.
  eval::MetricsReport report = eval::evaluate(run ? &run->state : nullptr, run ? run->splits.test : data, graph, data, opt);
  report.config_hash = run ? run->manifest.config_hash : config::hash_files({*graph_path});
  config::write_json(out / "metrics.json", eval::to_json(report));

  config::RunManifest m;
  m.command = "eval";
  m.config = {{"threshold", threshold},   {"top_k", opt.top_k},   {"particles", opt.particles},
              {"n_negatives", opt.n_negatives}, {"alpha", opt.alpha}, {"checkpoint", which}};
  m.config_hash = report.config_hash;
  m.seed = opt.seed;
  m.output_dir = out.string();
  m.inputs = {{"data", config::hash_files(dataset_files(data_dir))}};
  if (run) m.inputs["model"] = run->manifest.config_hash;
  if (graph_path) m.inputs["graph"] = config::hash_files({*graph_path});
  config::write_manifest(out, m);
  std::printf("metrics -> %s\n", (out / "metrics.json").string().c_str());
  return 0;
}

int cmd_ablate(const fs::path& data_dir, const std::string& config_path, const TrainFlags& flags,
               std::optional<std::uint64_t> seed, const eval::EvalOptions& base, const fs::path& out) {
  const auto base_cfg = resolve_train_config(config_path, flags, seed);
  check_output_dir(out);
  const auto data = dataio::load_dataset(dataio::DatasetPaths::in_directory(data_dir));
  eval::EvalOptions opt = base;
  opt.seed = base_cfg.seed;

  std::ofstream table(out / "ablation.tsv", std::ios::binary);
  table << "variant\tate_pearson\tate_r2\tjaccard_topk\tmean_wd\tfor_rate\tn_edges\n";
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string("NA");
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  json rows = json::array();
  for (const auto ablation : {objective::Ablation::sp_only, objective::Ablation::dge_only, objective::Ablation::dge_k_only,
                              objective::Ablation::full}) {
    trainer::TrainConfig cfg = base_cfg;
    cfg.ablation = ablation;
    const std::string name = objective::to_string(ablation);
    const auto run = run_training(data_dir, cfg, out / name, config_path);
    const auto graph = grn::extract_grn(run.state, 0.5);
    eval::MetricsReport r = eval::evaluate(&run.state, run.splits.test, graph, data, opt);
    r.config_hash = run.manifest.config_hash;
    config::write_json(out / name / "metrics.json", eval::to_json(r));
    table << name << '\t' << cell(r.mean_ate_pearson) << '\t' << cell(r.mean_ate_r2) << '\t' << cell(r.mean_jaccard)
          << '\t' << cell(r.mean_wd) << '\t' << cell(r.for_rate >= 0 ? std::optional<double>(r.for_rate) : std::nullopt)
          << '\t' << r.n_edges << '\n';
    json row = eval::to_json(r)["mean"];
    row["variant"] = name;
    row["mean_wd"] = r.mean_wd ? json(*r.mean_wd) : json(nullptr);
    row["for_rate"] = r.for_rate;
    row["n_edges"] = r.n_edges;
    rows.push_back(std::move(row));
    std::printf("%-11s edges %5ld  mean_wd %s\n", name.c_str(), static_cast<long>(r.n_edges), cell(r.mean_wd).c_str());
  }
  if (!table) throw Error("cannot write " + (out / "ablation.tsv").string());
  config::write_json(out / "ablation.json", rows);
  config::RunManifest m;
  m.command = "ablate";
  m.config_path = config_path;
  m.config = config::to_json(base_cfg);
  m.config_hash = train_hash(base_cfg, config::hash_files(dataset_files(data_dir)));
  m.seed = base_cfg.seed;
  m.output_dir = out.string();
  m.inputs = {{"data", config::hash_files(dataset_files(data_dir))}};
  config::write_manifest(out, m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal perturbation-response model: simulate, train, grn, predict, eval, ablate"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out, config_path, data_dir, model_dir, which = "final", graph_path;
  TrainFlags flags;
  double threshold = 0.5;
  std::string restrict = "all";
  std::vector<std::string> treatments;
  eval::EvalOptions eval_opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out, "output directory")->required();
  };

  auto* sim = app.add_subcommand("simulate", "write a synthetic dataset and its ground-truth network");
  common(sim);
  sim->add_option("--config", config_path, "synthesis config JSON (all fields required)");

  auto* tr = app.add_subcommand("train", "train a model on a dataset directory");
  common(tr);
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--config", config_path, "training config JSON (all fields required)");
  flags.add_to(tr);

  auto* gr = app.add_subcommand("grn", "extract the thresholded causal network");
  common(gr);
  gr->add_option("--model", model_dir, "training output directory")->required();
  gr->add_option("--checkpoint", which, "final | best");
  gr->add_option("--threshold", threshold, "edge probability threshold");
  gr->add_option("--restrict", restrict, "all | perturbed");

  auto* pr = app.add_subcommand("predict", "predict treatment effects for test-split perturbations");
  common(pr);
  pr->add_option("--model", model_dir, "training output directory")->required();
  pr->add_option("--data", data_dir, "dataset directory the model was trained on")->required();
  pr->add_option("--checkpoint", which, "final | best");
  pr->add_option("--treatment", treatments, "treatments to predict (default: held-out, else all in test)")->delimiter(',');
  pr->add_option("--particles", eval_opt.particles, "Monte-Carlo particles");

  auto* ev = app.add_subcommand("eval", "response and network metrics");
  common(ev);
  ev->add_option("--model", model_dir, "training output directory");
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--checkpoint", which, "final | best");
  ev->add_option("--graph", graph_path, "edge list or ground-truth file instead of the model's network");
  ev->add_option("--threshold", threshold, "edge probability threshold");
  ev->add_option("--top-k", eval_opt.top_k, "k of the top-k Jaccard index");
  ev->add_option("--particles", eval_opt.particles, "Monte-Carlo particles");
  ev->add_option("--n-negatives", eval_opt.n_negatives, "sampled non-edges for the false omission rate");

  auto* ab = app.add_subcommand("ablate", "train and evaluate the four loss variants");
  common(ab);
  ab->add_option("--data", data_dir, "dataset directory")->required();
  ab->add_option("--config", config_path, "training config JSON (all fields required)");
  flags.add_to(ab);
  ab->add_option("--particles", eval_opt.particles, "Monte-Carlo particles");

  CLI11_PARSE(app, argc, argv);
  try {
    auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
    if (sim->parsed()) return cmd_simulate(config_path, seed, out);
    if (tr->parsed()) return cmd_train(data_dir, config_path, flags, seed, out);
    if (gr->parsed()) return cmd_grn(model_dir, which, threshold, restrict, out);
    if (pr->parsed()) return cmd_predict(model_dir, data_dir, which, treatments, eval_opt.particles, seed, out);
    if (ev->parsed())
      return cmd_eval(opt_path(model_dir), data_dir, which, opt_path(graph_path), threshold, eval_opt, seed, out);
    if (ab->parsed()) return cmd_ablate(data_dir, config_path, flags, seed, eval_opt, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
