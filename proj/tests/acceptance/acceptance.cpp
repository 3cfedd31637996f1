// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
// usage: acceptance [criterion ...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "../oracles.hpp"
#include "gpo/config.hpp"
#include "gpo/diffcore.hpp"
#include "gpo/evalharness.hpp"
#include "gpo/grn.hpp"
#include "gpo/inference.hpp"
#include "gpo/special.hpp"
#include "gpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace gpo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool report(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  return pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string g_configs = ".";

// The benchmark generator lives in configs/benchmark_synth.json; only the seed varies.
dataio::SynthConfig benchmark(std::uint64_t seed) {
  auto sc = config::synth_from_json(config::read_json(fs::path(g_configs) / "benchmark_synth.json"));
  sc.seed = seed;
  return sc;
}

// Shorter schedule for the 60 ablation trainings of criterion 7.
trainer::TrainConfig ablation_schedule(std::uint64_t seed, objective::Ablation a) {
  trainer::TrainConfig tc;
  tc.epochs = 300;
  tc.batch_size = 128;
  tc.learning_rate = 3e-3;
  tc.seed = seed;
  tc.ablation = a;
  return tc;
}

Matrix probabilities(const model::ModelState& s) { return s.logits.unaryExpr([](double x) { return sigmoid(x); }); }

// ---- 1: gradients ---------------------------------------------------------------

struct GradToy {
  model::ModelState state;
  objective::Batch batch;
  model::StepNoise noise;
};

GradToy grad_toy(std::uint64_t seed) {
  dataio::SynthConfig sc;
  sc.n_perturbed = 2;
  sc.n_extended = 2;
  sc.n_measured = 2;
  sc.n_cells = 40;
  sc.edge_density = 0.5;
  sc.artifact_rate = 0.3;
  sc.seed = seed;
  const auto data = dataio::synthesize_dataset(sc).first;
  model::ModelConfig mc;
  mc.n_genes = data.catalog.n_genes();
  mc.n_causal = data.catalog.n_causal();
  mc.n_perturbed = data.catalog.n_perturbed();
  mc.latent_dim = 2;
  mc.encoder_hidden = 3;
  mc.effect_hidden = 3;
  GradToy t;
  t.state = model::init_model(mc, seed);
  model::fit_buffers(t.state, data);
  Rng rng(derive_seed(seed, 99));
  for (auto& [name, m] : model::parameters(t.state)) *m = 4.0 * open_uniform(m->rows(), m->cols(), rng).array() - 2.0;
  const auto dge = dataio::compute_reference_dge(data, dataio::pair_by_treatment(data));
  const auto refs = dataio::pair_qc_references(data);
  std::vector<Index> rows(12);
  for (Index k = 0; k < 12; ++k) rows[static_cast<std::size_t>(k)] = 2 * k;
  t.batch = objective::make_batch(t.state, data, rows, dge, refs);
  t.noise = model::draw_noise(t.state.config, t.batch.size(), derive_seed(seed, 7));
  return t;
}

constexpr int kTerms = 6;
const char* kTermNames[kTerms] = {"j_rec", "j_ade", "j_dge", "j_dge_k", "j_sp", "total"};

// All six terms; j_dge is the one-hop fit from the dge_only variant.
std::array<diffcore::Var, kTerms> loss_terms(diffcore::Tape& tape, const GradToy& t, const model::ModelVars& vars) {
  objective::LossWeights w;
  w.beta = 2.0;
  const auto full = objective::batch_loss(tape, vars, t.state, t.batch, t.noise, 0.7, model::MaskMode::relaxed, w);
  objective::LossWeights one_hop = w;
  one_hop.ablation = objective::Ablation::dge_only;
  const auto d1 = objective::batch_loss(tape, vars, t.state, t.batch, t.noise, 0.7, model::MaskMode::relaxed, one_hop);
  return {full.j_rec, full.j_ade, d1.j_dge_k, full.j_dge_k, full.j_sp, full.total};
}

std::array<double, kTerms> term_values(const GradToy& t, const model::ModelState& s) {
  diffcore::Tape tape;
  std::vector<diffcore::Var> flat;
  const auto vars = model::bind_variables(tape, s, flat);
  const auto terms = loss_terms(tape, t, vars);
  std::array<double, kTerms> out{};
  for (int k = 0; k < kTerms; ++k) out[static_cast<std::size_t>(k)] = terms[static_cast<std::size_t>(k)].scalar();
  return out;
}

// Signs of the L1 residuals P T_hat - dX for the one-hop and K-hop DGE fits.
std::array<Matrix, 2> residual_signs(const GradToy& t, const model::ModelState& s) {
  const Matrix prob = probabilities(s);
  const double n = static_cast<double>(prob.rows());
  std::array<Matrix, 2> out;
  const int hops[2] = {1, 5};
  for (int q = 0; q < 2; ++q) {
    const Matrix r = t.batch.treatments * diffcore::matrix_power_sum(prob, hops[q], 1.0 / n) - t.batch.dge;
    out[static_cast<std::size_t>(q)] = r.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
  }
  return out;
}

bool criterion_1() {
  const auto t0 = Clock::now();
  std::array<double, kTerms> worst{};
  // Fourth-order central stencil: losses reach O(1e3) at these parameter scales, so a
  // two-point difference cannot resolve gradient entries near 1e-6 through roundoff.
  const double h = 2e-3;
  long compared = 0, kink_skips = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    GradToy toy = grad_toy(seed);
    // analytic, one backward pass per term
    std::array<std::vector<Matrix>, kTerms> analytic;
    for (int k = 0; k < kTerms; ++k) {
      diffcore::Tape tape;
      std::vector<diffcore::Var> flat;
      const auto vars = model::bind_variables(tape, toy.state, flat);
      tape.backward(loss_terms(tape, toy, vars)[static_cast<std::size_t>(k)]);
      for (const auto& v : flat) analytic[static_cast<std::size_t>(k)].push_back(tape.grad(v));
    }
    // central differences, entry by entry
    model::ModelState probe = toy.state;
    auto params = model::parameters(probe);
    for (std::size_t p = 0; p < params.size(); ++p) {
      Matrix& m = *params[p].second;
      for (Index e = 0; e < m.size(); ++e) {
        const double x = m(e);
        std::array<std::array<double, kTerms>, 4> f{};
        const double offsets[4] = {2.0, 1.0, -1.0, -2.0};
        const auto base_signs = residual_signs(toy, probe);
        bool kink[2] = {false, false};  // stencil straddles an L1 kink of the one-hop / K-hop fit
        for (int q = 0; q < 4; ++q) {
          m(e) = x + offsets[q] * h;
          f[static_cast<std::size_t>(q)] = term_values(toy, probe);
          const auto signs = residual_signs(toy, probe);
          for (int r = 0; r < 2; ++r) kink[r] = kink[r] || signs[static_cast<std::size_t>(r)] != base_signs[static_cast<std::size_t>(r)];
        }
        m(e) = x;
        for (int k = 0; k < kTerms; ++k) {
          const auto kk = static_cast<std::size_t>(k);
          const double fd = (-f[0][kk] + 8.0 * f[1][kk] - 8.0 * f[2][kk] + f[3][kk]) / (12.0 * h);
          const double a = analytic[kk][p](e);
          if (std::max(std::abs(a), std::abs(fd)) < 1e-6) continue;
          const bool l1_one_hop = k == 2, l1_k_hop = k == 3 || k == 5;
          if ((l1_one_hop && kink[0]) || (l1_k_hop && kink[1])) {
            ++kink_skips;
            continue;
          }
          ++compared;
          const double rel = std::abs(a - fd) / std::max(std::abs(a), std::abs(fd));
          worst[kk] = std::max(worst[kk], rel);
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  std::string detail = "max relative error over 100 seeds:";
  bool ok = secs < 60.0;
  for (int k = 0; k < kTerms; ++k) {
    detail += fmt(" %s %.2e", kTermNames[k], worst[static_cast<std::size_t>(k)]);
    ok = ok && worst[static_cast<std::size_t>(k)] < 1e-4;
  }
  return report(1, ok,
                detail + fmt(" (limit 1e-4) on %ld entries, %ld skipped at L1 kinks, %.1f s (limit 60 s)", compared,
                             kink_skips, secs));
}

// ---- 2: K-hop sum ------------------------------------------------------------------

bool criterion_2() {
  // Every weighted digraph on 4 nodes without self-loops, weights in {0, 0.25, 0.5}.
  const double levels[3] = {0.0, 0.25, 0.5};
  std::vector<std::pair<Index, Index>> slots;
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j)
      if (i != j) slots.emplace_back(i, j);
  long graphs = 0;
  double worst = 0.0;
  Matrix w = Matrix::Zero(4, 4);
  long code_max = 1;
  for (std::size_t s = 0; s < slots.size(); ++s) code_max *= 3;
  for (long code = 0; code < code_max; ++code) {
    long c = code;
    for (const auto& [i, j] : slots) {
      w(i, j) = levels[c % 3];
      c /= 3;
    }
    const Matrix fast = diffcore::matrix_power_sum(w, 5, 0.25);
    const Matrix slow = oracle::walk_enumeration(w, 5, 0.25);
    const double scale = std::max(1.0, slow.cwiseAbs().maxCoeff());
    worst = std::max(worst, (fast - slow).cwiseAbs().maxCoeff() / scale);
    ++graphs;
  }
  // machine precision: a few ulps of the largest entry
  const double limit = 16.0 * std::numeric_limits<double>::epsilon();
  return report(2, worst <= limit,
                fmt("%ld graphs, K = 5, max scaled difference %.3g (limit %.3g)", graphs, worst, limit));
}

// ---- 3: assignment -------------------------------------------------------------------

bool criterion_3() {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix cost = open_uniform(5, 5, rng) * 10.0;
    const auto assign = dataio::solve_assignment(cost);
    double total = 0.0;
    std::vector<bool> used(5, false);
    bool valid = assign.size() == 5;
    for (Index i = 0; valid && i < 5; ++i) {
      const Index j = assign[static_cast<std::size_t>(i)];
      valid = j >= 0 && j < 5 && !used[static_cast<std::size_t>(j)];
      if (valid) {
        used[static_cast<std::size_t>(j)] = true;
        total += cost(i, j);
      }
    }
    if (!valid) return report(3, false, fmt("instance %d returned an invalid assignment", trial));
    worst = std::max(worst, std::abs(total - oracle::brute_force_assignment(cost)));
  }
  return report(3, worst <= 1e-12, fmt("200 random 5x5 instances, max cost gap %.3g (limit 1e-12)", worst));
}

// ---- 4: statistics -----------------------------------------------------------------

bool criterion_4() {
  Rng rng(4);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> size(1, 60);
  double wd_worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(size(rng))), b(static_cast<std::size_t>(size(rng)));
    const double shift = 0.05 * trial;
    for (auto& x : a) x = normal(rng);
    for (auto& x : b) x = trial % 3 == 0 ? std::round(2.0 * normal(rng) + shift) : normal(rng) * 1.5 + shift;
    wd_worst = std::max(wd_worst, std::abs(eval::wasserstein_1d(a, b) - oracle::wasserstein_cdf_integral(a, b)));
  }

  double mw_worst = 0.0;
  int mw_cases = 0;
  for (int m = 1; m <= 11; ++m)
    for (int n = 1; m + n <= 12; ++n)
      for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> a(static_cast<std::size_t>(m)), b(static_cast<std::size_t>(n));
        // alternate continuous and heavily tied samples
        for (auto& x : a) x = rep % 2 ? std::round(normal(rng)) : normal(rng);
        for (auto& x : b) x = rep % 2 ? std::round(normal(rng) + 0.5) : normal(rng) + 0.5;
        mw_worst = std::max(mw_worst, std::abs(eval::mann_whitney_p(a, b) - oracle::mann_whitney_exact_enumeration(a, b)));
        ++mw_cases;
      }

  dataio::SynthConfig sc;
  sc.n_perturbed = 30;
  sc.n_extended = 10;
  sc.n_measured = 10;
  sc.n_cells = 3000;
  sc.knockdown_strength = 0.0;
  sc.seed = 4;
  const auto data = dataio::synthesize_dataset(sc).first;
  const auto names = data.catalog.causal_names();
  const Index t = data.catalog.n_causal();
  const auto empty = grn::make_graph(names, data.catalog.n_perturbed(), Matrix::Zero(t, t), 0.5);
  const auto f = eval::false_omission_rate(empty, data, 500, 0.05, 4);
  const double for_limit = 0.05 + 3.0 * std::sqrt(0.05 / 500.0);

  const bool ok = wd_worst < 1e-6 && mw_worst < 0.02 && f.n_sampled == 500 && f.for_rate <= for_limit;
  return report(4, ok,
                fmt("W1 vs CDF integral max gap %.2e on 200 pairs (limit 1e-6); Mann-Whitney vs enumeration max gap %.2e "
                    "on %d cases with |a|+|b|<=12 (limit 0.02); FOR on zero-effect data %.4f over %ld negatives "
                    "(limit %.4f)",
                    wd_worst, mw_worst, mw_cases, f.for_rate, static_cast<long>(f.n_sampled), for_limit));
}

// ---- 5: likelihood -------------------------------------------------------------------

bool criterion_5() {
  const std::pair<double, double> points[10] = {{0.5, 0.5}, {2.0, 1.0},   {5.0, 10.0},  {20.0, 2.0},  {50.0, 100.0},
                                                {100.0, 0.5}, {1.0, 50.0}, {10.0, 0.2}, {300.0, 5.0}, {0.05, 3.0}};
  double norm_worst = 0.0, z_worst = 0.0;
  int checks = 0, within = 0;
  Rng rng(5);
  const int draws = 1000000;
  for (const auto& [mu, theta] : points) {
    const double sd = std::sqrt(mu + mu * mu / theta);
    const long upper = static_cast<long>(mu + 60.0 * sd + 200.0);
    double total = 0.0;
    for (long x = 0; x <= upper; ++x) total += std::exp(model::nb_log_mass(static_cast<double>(x), mu, theta));
    norm_worst = std::max(norm_worst, std::abs(total - 1.0));

    std::gamma_distribution<double> gamma(theta, mu / theta);
    std::map<long, long> hist;
    for (int d = 0; d < draws; ++d) {
      const double lambda = gamma(rng);
      const long x = lambda > 0.0 ? std::poisson_distribution<long>(lambda)(rng) : 0;
      ++hist[x];
    }
    for (const long k : {0L, static_cast<long>(std::floor(mu)), static_cast<long>(std::floor(mu + sd))}) {
      const double p = std::exp(model::nb_log_mass(static_cast<double>(k), mu, theta));
      const double freq = static_cast<double>(hist[k]) / draws;
      const double se = std::sqrt(p * (1.0 - p) / draws);
      const double z = std::abs(freq - p) / se;
      z_worst = std::max(z_worst, z);
      ++checks;
      within += z <= 3.0;
    }
  }
  const bool ok = norm_worst <= 1e-6 && within == checks;
  return report(5, ok,
                fmt("mass sums within %.2e of 1 on 10 parameter points (limit 1e-6); %d/%d Monte-Carlo frequencies "
                    "within 3 SE at 1e6 draws (largest |z| %.2f)",
                    norm_worst, within, checks, z_worst));
}

// ---- 6: network recovery -----------------------------------------------------------

bool criterion_6() {
  const auto t0 = Clock::now();
  const auto [data, truth] = dataio::synthesize_dataset(benchmark(1));
  const auto splits = dataio::split_dataset(data, 0, {});
  trainer::TrainConfig tc;  // defaults, full loss
  const auto result = trainer::train(splits, tc);
  const auto auroc = eval::edge_auroc(probabilities(result.final_state), truth.adjacency, data.catalog.n_causal());
  const auto graph = grn::extract_grn(result.final_state, 0.5);
  const auto wd = eval::mean_wd(graph, data).mean_wd;
  int wins = 0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    const auto random_wd = eval::mean_wd(grn::degree_matched_random(graph, r), data).mean_wd;
    wins += wd && random_wd && *wd > *random_wd;
  }
  const double secs = seconds_since(t0);
  const bool ok = auroc && *auroc >= 0.80 && wins >= 18 && secs <= 600.0;
  return report(6, ok,
                fmt("%d epochs, AUROC %.4f (limit 0.80), %zu edges, mean WD %.4f beats degree-matched random graphs in "
                    "%d/20 (limit 18), %.0f s (limit 600 s)",
                    tc.epochs, auroc.value_or(-1.0), graph.edges.size(), wd.value_or(-1.0), wins, secs));
}

// ---- 7: ablation direction ------------------------------------------------------------

bool criterion_7(int n_seeds) {
  const auto t0 = Clock::now();
  int fewer_edges = 0, higher_wd = 0;
  for (int s = 1; s <= n_seeds; ++s) {
    const auto data = dataio::synthesize_dataset(benchmark(static_cast<std::uint64_t>(s))).first;
    const auto splits = dataio::split_dataset(data, static_cast<std::uint64_t>(s), {});
    std::map<objective::Ablation, grn::GrnGraph> graphs;
    for (const auto a : {objective::Ablation::full, objective::Ablation::dge_k_only, objective::Ablation::sp_only})
      graphs[a] = grn::extract_grn(trainer::train(splits, ablation_schedule(static_cast<std::uint64_t>(s), a)).final_state);
    const auto& full = graphs[objective::Ablation::full];
    const auto& dk = graphs[objective::Ablation::dge_k_only];
    const auto& sp = graphs[objective::Ablation::sp_only];
    const auto wd_full = eval::mean_wd(full, data).mean_wd, wd_sp = eval::mean_wd(sp, data).mean_wd;
    fewer_edges += full.edges.size() < dk.edges.size();
    higher_wd += wd_full && wd_sp && *wd_full > *wd_sp;
    std::printf("  seed %2d: edges full %zu dge_k_only %zu sp_only %zu; mean WD full %.4f sp_only %.4f\n", s,
                full.edges.size(), dk.edges.size(), sp.edges.size(), wd_full.value_or(-1.0), wd_sp.value_or(-1.0));
    std::fflush(stdout);
  }
  const int need = (18 * n_seeds + 19) / 20;
  const bool ok = fewer_edges >= need && higher_wd >= need;
  return report(7, ok,
                fmt("full has fewer edges than dge_k_only in %d/%d seeds and higher mean WD than sp_only in %d/%d "
                    "(limit %d each), %.0f s",
                    fewer_edges, n_seeds, higher_wd, n_seeds, need, seconds_since(t0)));
}

// ---- 8: held-out hub -------------------------------------------------------------------

bool criterion_8() {
  const auto [data, truth] = dataio::synthesize_dataset(benchmark(1));
  // Hub: highest combined in/out degree at weight threshold 0.3 among perturbed genes of the true network.
  const auto true_graph = grn::make_graph(data.catalog.causal_names(), data.catalog.n_perturbed(),
                                          truth.adjacency.cwiseAbs(), 0.5);
  const auto stats = grn::degree_stats(true_graph, 0.3);
  std::string hub;
  Index hub_in = 0, hub_out = 0;
  for (Index r : stats.ranking)
    if (r < data.catalog.n_perturbed()) {
      hub = stats.nodes[static_cast<std::size_t>(r)].name;
      hub_in = stats.nodes[static_cast<std::size_t>(r)].in_degree;
      hub_out = stats.nodes[static_cast<std::size_t>(r)].out_degree;
      break;
    }
  trainer::TrainConfig tc;
  tc.holdout = {hub};
  const auto splits = dataio::split_dataset(data, 0, tc.holdout);
  const auto result = trainer::train(splits, tc);
  const auto u = inference::predict_unseen(result.final_state, hub, splits.test);
  const auto rho = eval::ate_pearson(u.prediction.ate, u.observed);
  const Index pos = *data.catalog.causal_position(hub);
  const Matrix prob = probabilities(result.final_state);
  return report(8, rho && *rho >= 0.5,
                fmt("held-out hub %s (true in-degree %ld, out-degree %ld, %ld test rows): ATE-rho %.4f (limit 0.5); "
                    "learned row of the hub has mean probability %.4f, self-loop %.4f",
                    hub.c_str(), static_cast<long>(hub_in), static_cast<long>(hub_out),
                    static_cast<long>(u.observed_rows), rho.value_or(-2.0), prob.row(pos).mean(), prob(pos, pos)));
}

// ---- 9: reproducible pipeline ------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool criterion_9(const std::string& tool) {
  const std::string& configs = g_configs;
  if (tool.empty()) return report(9, false, "path to the gpo tool not given");
  const fs::path work = fs::temp_directory_path() / "gpo_acceptance_9";
  fs::remove_all(work);
  for (const char* run : {"run1", "run2"}) {
    fs::create_directories(work / run);
    const std::string cd = "cd '" + (work / run).string() + "' && ";
    const std::string cmds[] = {
        "'" + tool + "' simulate --config '" + configs + "/smoke_synth.json' --out data",
        "'" + tool + "' train --data data --config '" + configs + "/smoke_train.json' --out model",
        "'" + tool + "' grn --model model --out grn",
        "'" + tool + "' eval --model model --data data --particles 500 --out eval",
    };
    for (const auto& c : cmds)
      if (std::system((cd + c + " > /dev/null").c_str()) != 0) return report(9, false, "command failed: " + c);
  }
  int files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(work / "run1")) {
    if (!entry.is_regular_file() || entry.path().filename() == "timing.tsv") continue;
    const auto rel = fs::relative(entry.path(), work / "run1");
    ++files;
    if (!fs::exists(work / "run2" / rel) || slurp(entry.path()) != slurp(work / "run2" / rel)) ++differing;
  }
  fs::remove_all(work);
  return report(9, files > 0 && differing == 0,
                fmt("simulate -> train -> grn -> eval twice with seed 0: %d files compared, %d differ", files, differing));
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  std::string tool;
  int seeds_7 = 20;
  for (int k = 1; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--tool" && k + 1 < argc) tool = argv[++k];
    else if (a == "--configs" && k + 1 < argc) g_configs = argv[++k];
    else if (a == "--seeds" && k + 1 < argc) seeds_7 = std::atoi(argv[++k]);
    else which.push_back(std::atoi(a.c_str()));
  }
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  bool all = true;
  for (int c : which) {
    try {
      switch (c) {
        case 1: all &= criterion_1(); break;
        case 2: all &= criterion_2(); break;
        case 3: all &= criterion_3(); break;
        case 4: all &= criterion_4(); break;
        case 5: all &= criterion_5(); break;
        case 6: all &= criterion_6(); break;
        case 7: all &= criterion_7(seeds_7); break;
        case 8: all &= criterion_8(); break;
        case 9: all &= criterion_9(tool); break;
        default: std::fprintf(stderr, "unknown criterion %d\n", c); return 2;
      }
    } catch (const std::exception& e) {
      all &= report(c, false, std::string("exception: ") + e.what());
    }
  }
  return all ? 0 : 1;
}
