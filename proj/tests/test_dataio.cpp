#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "gpo/dataio.hpp"
#include "oracles.hpp"

using namespace gpo;
using namespace gpo::dataio;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gpo_test_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DatasetPaths fixture(const fs::path& dir, const std::string& treatments = "g0\ng1\ncontrol\n",
                     const std::string& expr_rows = "1\t2\t3\n4\t5\t0\n7\t0\t9\n") {
  auto paths = DatasetPaths::in_directory(dir);
  write_file(paths.catalog, "g0\tperturbed\ng1\tperturbed\ng2\textended\n");
  write_file(paths.expression, "g0\tg1\tg2\n" + expr_rows);
  write_file(paths.treatments, treatments);
  write_file(paths.qc, "0\n1\n0\n");
  return paths;
}

// Two-sample Kolmogorov-Smirnov p-value via the asymptotic distribution.
double ks_p_value(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  const double ne = double(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double q = 0.0;
  for (int k = 1; k < 100; ++k) q += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(q, 0.0, 1.0);
}

}  // namespace

TEST_CASE("load a three-row fixture") {
  const auto dir = scratch_dir("fixture");
  const auto d = load_dataset(fixture(dir));
  CHECK(d.n_cells() == 3);
  CHECK(d.treatments.rowwise().sum() == Vector((Vector(3) << 1, 1, 0).finished()));
  CHECK(d.qc(1) == 1.0);
  CHECK(d.library_size(0) == 6.0);
  CHECK(d.catalog.n_causal() == 3);
  CHECK(d.treatment_index() == std::vector<Index>{0, 1, -1});
}

TEST_CASE("load rejects malformed input with a location") {
  const auto dir = scratch_dir("bad");
  try {
    load_dataset(fixture(dir, "g0\nnotagene\ncontrol\n"));
    FAIL("expected error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("notagene") != std::string::npos);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_dataset(fixture(dir, "g0\ng1+g2\ncontrol\n")), ParseError);
  CHECK_THROWS_AS(load_dataset(fixture(dir, "g0\ng1\n")), ParseError);
  CHECK_THROWS_AS(load_dataset(fixture(dir, "g0\ng1\ncontrol\n", "1\t2\t3\n4\t5.5\t0\n7\t0\t9\n")), ParseError);
  CHECK_THROWS_AS(load_dataset(fixture(dir, "g0\ng1\ncontrol\n", "1\t2\t3\n4\t5\n7\t0\t9\n")), ParseError);
  auto paths = fixture(dir);
  write_file(paths.catalog, "g0\tperturbed\ng1\tperturbed\ng1\textended\n");
  CHECK_THROWS_AS(load_dataset(paths), ParseError);
}

TEST_CASE("save then load reproduces the dataset and its bytes") {
  SynthConfig cfg;
  cfg.n_cells = 120;
  cfg.seed = 4;
  const auto [d, truth] = synthesize_dataset(cfg);
  const auto dir = scratch_dir("roundtrip");
  const auto p1 = DatasetPaths::in_directory(dir / "a");
  const auto p2 = DatasetPaths::in_directory(dir / "b");
  save_dataset(d, p1);
  const auto loaded = load_dataset(p1);
  CHECK(loaded == d);
  save_dataset(loaded, p2);
  CHECK(slurp(p1.expression) == slurp(p2.expression));
  CHECK(slurp(p1.treatments) == slurp(p2.treatments));
  CHECK(slurp(p1.qc) == slurp(p2.qc));
  CHECK(slurp(p1.catalog) == slurp(p2.catalog));

  save_ground_truth(truth, d.catalog, dir / "truth.tsv");
  const auto t2 = load_ground_truth(dir / "truth.tsv", d.catalog);
  CHECK(t2.adjacency == truth.adjacency);
}

TEST_CASE("synthesis is deterministic and acyclic") {
  SynthConfig cfg;
  cfg.seed = 9;
  const auto [a, ta] = synthesize_dataset(cfg);
  const auto [b, tb] = synthesize_dataset(cfg);
  CHECK(a == b);
  CHECK(ta.adjacency == tb.adjacency);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    CHECK(synthesize_dataset(cfg).second.is_acyclic());
  }
  cfg.seed = 10;
  CHECK_FALSE(synthesize_dataset(cfg).first == a);
}

TEST_CASE("synthesis config errors") {
  SynthConfig cfg;
  cfg.n_perturbed = 2;
  cfg.n_extended = 0;
  cfg.edge_density = 0.01;  // round(0.01 * 1) == 0 edges
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.n_cells = 5;
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.edge_density = 1.0;
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
}

TEST_CASE("zero knockdown leaves perturbed and control rows identically distributed") {
  SynthConfig cfg;
  cfg.n_cells = 2000;
  cfg.knockdown_strength = 0.0;
  cfg.seed = 21;
  const auto [d, truth] = synthesize_dataset(cfg);
  const auto treat = d.treatment_index();
  std::vector<double> ctrl_means, pert_means;
  for (Index g = 0; g < d.counts.cols(); ++g) {
    double sc = 0, sp = 0;
    int nc = 0, np = 0;
    for (Index n = 0; n < d.n_cells(); ++n) {
      if (treat[n] < 0) {
        sc += d.counts(n, g);
        ++nc;
      } else {
        sp += d.counts(n, g);
        ++np;
      }
    }
    ctrl_means.push_back(sc / nc);
    pert_means.push_back(sp / np);
  }
  CHECK(ks_p_value(ctrl_means, pert_means) > 0.01);
}

TEST_CASE("knocked-down gene has lower mean in its own perturbed rows") {
  SynthConfig cfg;
  cfg.n_cells = 2000;
  cfg.knockdown_strength = 1.5;
  cfg.seed = 5;
  const auto [d, truth] = synthesize_dataset(cfg);
  const auto ctrl = d.rows_with_treatment(-1);
  for (Index i = 0; i < cfg.n_perturbed; ++i) {
    const auto rows = d.rows_with_treatment(i);
    double mp = 0, mc = 0;
    for (Index r : rows) mp += d.counts(r, i);
    for (Index r : ctrl) mc += d.counts(r, i);
    mp /= rows.size();
    mc /= ctrl.size();
    // expected ratio exp(-1.5) ~ 0.22; allow generous sampling slack
    CHECK(mp < 0.5 * mc);
  }
}

TEST_CASE("optimal transport pairing examples") {
  Matrix one(1, 3);
  one << 3, 4, 5;
  auto plan = pair_optimal_transport(one, one);
  REQUIRE(plan.pairs.size() == 1);
  CHECK(plan.total_cost == 0.0);

  Matrix cost(2, 2);
  cost << 81, 1, 1, 81;  // (0 vs 9, 0 vs 1; 10 vs 9, 10 vs 1) squared
  auto a = solve_assignment(cost);
  CHECK(a == std::vector<Index>{1, 0});

  CHECK_THROWS_AS(pair_optimal_transport(one, Matrix(0, 3)), PairingError);
}

TEST_CASE("one-dimensional pairing example on raw values") {
  // perturbed {(0),(10)}, controls {(9),(1)} on squared Euclidean cost
  Matrix cost(2, 2);
  const double p[2] = {0, 10}, c[2] = {9, 1};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) cost(i, j) = (p[i] - c[j]) * (p[i] - c[j]);
  const auto a = solve_assignment(cost);
  CHECK(a[0] == 1);  // 0 <-> 1
  CHECK(a[1] == 0);  // 10 <-> 9
}

TEST_CASE("assignment matches permutation brute force and beats identity order") {
  Rng rng(77);
  std::uniform_real_distribution<double> u(0, 10);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix cost(5, 5);
    for (Index k = 0; k < 25; ++k) cost(k) = u(rng);
    const auto a = solve_assignment(cost);
    double total = 0, identity = 0;
    for (Index i = 0; i < 5; ++i) {
      total += cost(i, a[i]);
      identity += cost(i, i);
    }
    CHECK(std::abs(total - oracle::brute_force_assignment(cost)) < 1e-9);
    CHECK(total <= identity + 1e-12);
  }
  // rectangular 3 x 5
  Matrix rect(3, 5);
  for (Index k = 0; k < 15; ++k) rect(k) = u(rng);
  const auto a = solve_assignment(rect);
  double total = 0;
  for (Index i = 0; i < 3; ++i) total += rect(i, a[i]);
  CHECK(std::abs(total - oracle::brute_force_assignment(rect)) < 1e-9);
}

TEST_CASE("rectangular pairing reports unmatched rows") {
  Rng rng(3);
  Matrix pert = Matrix::Constant(2, 4, 5.0), ctrl = Matrix::Constant(4, 4, 5.0);
  ctrl(2, 0) = 9;
  auto plan = pair_optimal_transport(pert, ctrl);
  CHECK(plan.pairs.size() == 2);
  CHECK(plan.unmatched_controls.size() == 2);
  auto flipped = pair_optimal_transport(ctrl, pert);
  CHECK(flipped.pairs.size() == 2);
  CHECK(flipped.unmatched_perturbed.size() == 2);
}

TEST_CASE("reference DGE examples") {
  PerturbDataset d;
  d.catalog.names = {"a", "b"};
  d.catalog.perturbed_idx = {0};
  d.catalog.extended_idx = {1};
  d.counts.resize(3, 2);
  d.counts << 3, 1, 1, 3, 3, 1;
  d.treatments.resize(3, 2);
  d.treatments << 1, 0, 0, 0, 1, 0;
  d.qc = Vector::Zero(3);
  d.library_size = d.counts.rowwise().sum();
  d.validate();

  PairingPlan plan;
  plan.pairs = {{0, 1}, {2, 2}};  // row 2 paired with an identical profile
  // row 2 is a perturbed row only in name here; compare with itself
  const auto ref = compute_reference_dge(d, plan);
  CHECK(ref.delta(0, 0) == doctest::Approx(1.0));
  CHECK(ref.delta(0, 1) == doctest::Approx(1.0));
  CHECK(ref.excluded[0] == 0);
  CHECK(ref.delta.row(1).isZero());
  CHECK(ref.excluded[1] == 1);  // control
  CHECK(ref.delta.row(2).isZero());
  CHECK(ref.excluded[2] == 0);  // identical pair: retained, zero
}

TEST_CASE("reference DGE invariants on synthetic data") {
  SynthConfig cfg;
  cfg.n_cells = 400;
  cfg.seed = 2;
  const auto [d, truth] = synthesize_dataset(cfg);
  const auto plan = pair_by_treatment(d);
  const auto ref = compute_reference_dge(d, plan);
  CHECK(ref.delta.minCoeff() >= 0.0);
  CHECK(ref.delta.maxCoeff() <= 1.0);
  const auto treat = d.treatment_index();
  std::vector<char> paired(d.n_cells(), 0);
  for (auto [p, c] : plan.pairs) paired[p] = 1;
  for (Index n = 0; n < d.n_cells(); ++n) {
    CHECK(bool(ref.excluded[n]) == (treat[n] < 0 || !paired[n]));
  }
  for (auto [p, c] : plan.pairs) CHECK(treat[c] < 0);
}

TEST_CASE("QC references pair failed rows with passing rows of the same treatment") {
  SynthConfig cfg;
  cfg.n_cells = 400;
  cfg.artifact_rate = 0.2;
  cfg.seed = 8;
  const auto [d, truth] = synthesize_dataset(cfg);
  const auto ref = pair_qc_references(d);
  const auto treat = d.treatment_index();
  int used = 0;
  for (Index n = 0; n < d.n_cells(); ++n) {
    if (d.qc(n) == 0.0) {
      CHECK(ref[n] == -1);
      continue;
    }
    if (ref[n] < 0) continue;
    ++used;
    CHECK(d.qc(ref[n]) == 0.0);
    CHECK(treat[ref[n]] == treat[n]);
  }
  CHECK(used > 0);
}

TEST_CASE("split examples") {
  SynthConfig cfg;
  cfg.n_cells = 1000;
  cfg.seed = 1;
  const auto [d, truth] = synthesize_dataset(cfg);
  const auto s = split_dataset(d, 0, {});
  CHECK(std::abs(double(s.train_rows.size()) - 800.0) <= 1.0);
  CHECK(std::abs(double(s.val_rows.size()) - 100.0) <= 1.0);
  CHECK(std::abs(double(s.test_rows.size()) - 100.0) <= 1.0);
  for (const auto* part : {&s.train, &s.val, &s.test}) CHECK(!part->rows_with_treatment(-1).empty());

  const auto h = split_dataset(d, 0, {"p003"});
  const Index pos = *d.catalog.causal_position("p003");
  CHECK(h.train.rows_with_treatment(pos).empty());
  CHECK(h.val.rows_with_treatment(pos).empty());
  CHECK(h.test.rows_with_treatment(pos).size() == d.rows_with_treatment(pos).size());

  const auto s1 = split_dataset(d, 1, {});
  CHECK(s1.train_rows != s.train_rows);
  std::vector<Index> all0, all1;
  for (auto* v : {&s.train_rows, &s.val_rows, &s.test_rows}) all0.insert(all0.end(), v->begin(), v->end());
  for (auto* v : {&s1.train_rows, &s1.val_rows, &s1.test_rows}) all1.insert(all1.end(), v->begin(), v->end());
  std::sort(all0.begin(), all0.end());
  std::sort(all1.begin(), all1.end());
  CHECK(all0 == all1);

  CHECK_THROWS_AS(split_dataset(d, 0, {"e000"}), ConfigError);
  CHECK_THROWS_AS(split_dataset(d, 0, {"nope"}), ConfigError);
}
