#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gpo/evalharness.hpp"
#include "oracles.hpp"

using namespace gpo;
using namespace gpo::eval;

namespace {

std::vector<double> draw(Rng& rng, std::size_t n, double spread, bool integer) {
  std::normal_distribution<double> normal(0.0, spread);
  std::vector<double> v(n);
  for (auto& x : v) x = integer ? std::round(normal(rng)) : normal(rng);
  return v;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())); }

dataio::SynthConfig small_benchmark(std::uint64_t seed) {
  dataio::SynthConfig c;
  c.n_perturbed = 20;
  c.n_extended = 10;
  c.n_measured = 10;
  c.n_cells = 3000;
  c.edge_density = 0.08;
  c.seed = seed;
  return c;
}

grn::GrnGraph truth_graph(const dataio::PerturbDataset& data, const dataio::GroundTruthGrn& truth) {
  const Matrix p = (truth.adjacency.array() != 0.0).cast<double>();
  return grn::make_graph(data.catalog.causal_names(), data.catalog.n_perturbed(), p, 0.5);
}

}  // namespace

TEST_CASE("ate_pearson") {
  const Vector v = (Vector(5) << 1, 4, 2, 8, 5).finished();
  CHECK(*ate_pearson(v, v) == doctest::Approx(1.0));
  CHECK(*ate_pearson(-v, v) == doctest::Approx(-1.0));
  CHECK_FALSE(ate_pearson(Vector::Constant(5, 2.0), v).has_value());
  CHECK_THROWS_AS(ate_pearson(v, Vector::Zero(4)), ShapeError);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto x = draw(rng, 30, 1.0, false), y = draw(rng, 30, 2.0, false);
    CHECK(*ate_pearson(to_vector(x), to_vector(y)) == doctest::Approx(oracle::pearson_two_pass(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("ate_r2") {
  const Vector obs = (Vector(4) << 1, 2, 3, 6).finished();
  CHECK(*ate_r2(obs, obs) == doctest::Approx(1.0));
  CHECK(*ate_r2(Vector::Constant(4, obs.mean()), obs) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_FALSE(ate_r2(obs, Vector::Constant(4, 1.0)).has_value());
  const Vector pred = (Vector(4) << 0, 2, 4, 5).finished();
  // SS_res = 1 + 0 + 1 + 1 = 3; mean 3, SS_tot = 4 + 1 + 0 + 9 = 14
  CHECK(*ate_r2(pred, obs) == doctest::Approx(1.0 - 3.0 / 14.0));
}

TEST_CASE("jaccard_topk") {
  Vector a = Vector::LinSpaced(200, 200, 1);
  CHECK(jaccard_topk(a, a, 50) == 1.0);
  Vector b = Vector::Zero(200);
  b.tail(50).setOnes();
  CHECK(jaccard_topk(a, b, 50) == 0.0);
  // top-50 of c: indices 25..74, overlapping a's top 50 (0..49) in 25 genes
  Vector c = Vector::Zero(200);
  c.segment(25, 50).setConstant(-3.0);
  CHECK(jaccard_topk(a, c, 50) == doctest::Approx(25.0 / 75.0));
  // ties resolve to the lower gene index
  CHECK(top_k_abs(Vector::Ones(6), 2) == std::vector<Index>{0, 1});
  CHECK_THROWS_AS(jaccard_topk(a, a, 201), ConfigError);
}

TEST_CASE("wasserstein_1d") {
  const std::vector<double> a{0.0, 1.0}, b{1.0, 2.0, 3.0};
  CHECK(wasserstein_1d(a, a) == 0.0);
  std::vector<double> shifted{2.5, 3.5};
  CHECK(wasserstein_1d(a, shifted) == doctest::Approx(2.5));
  CHECK(wasserstein_1d(a, b) == doctest::Approx(oracle::wasserstein_cdf_integral(a, b)).epsilon(1e-12));
  CHECK_THROWS_AS(wasserstein_1d(a, std::vector<double>{}), EvaluationError);

  Rng rng(2);
  std::uniform_int_distribution<int> size(1, 40);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto x = draw(rng, static_cast<std::size_t>(size(rng)), 1.0, t % 2 == 0);
    auto y = draw(rng, static_cast<std::size_t>(size(rng)), 2.0, t % 2 == 0);
    worst = std::max(worst, std::abs(wasserstein_1d(x, y) - oracle::wasserstein_cdf_integral(x, y)));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("wasserstein_1d behaves as a metric") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto x = draw(rng, 7, 1.0, false), y = draw(rng, 11, 1.5, false), z = draw(rng, 4, 3.0, false);
    CHECK(wasserstein_1d(x, y) == doctest::Approx(wasserstein_1d(y, x)).epsilon(1e-12));
    CHECK(wasserstein_1d(x, z) <= wasserstein_1d(x, y) + wasserstein_1d(y, z) + 1e-12);
    auto permuted = x;
    std::reverse(permuted.begin(), permuted.end());
    CHECK(wasserstein_1d(x, permuted) == 0.0);
  }
}

TEST_CASE("mann_whitney_p examples") {
  const std::vector<double> a{1, 2, 3}, b{10, 11, 12};
  CHECK(mann_whitney_p(a, b) == doctest::Approx(0.1));
  CHECK(mann_whitney_p(b, a) == mann_whitney_p(a, b));
  const std::vector<double> same{4, 1, 7, 7, 2};
  CHECK(mann_whitney_p(same, same) >= 0.9);
  CHECK(mann_whitney_p(std::vector<double>{5, 5}, std::vector<double>{5, 5, 5}) == 1.0);
  CHECK_THROWS_AS(mann_whitney_p(a, std::vector<double>{}), EvaluationError);

  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto x = draw(rng, 30, 1.0, true), y = draw(rng, 25, 1.0, true);
    const double p = mann_whitney_p(x, y);
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
    CHECK(p == doctest::Approx(mann_whitney_p(y, x)).epsilon(1e-12));
  }
}

TEST_CASE("exact branch agrees with enumeration beyond the switch-over size") {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const auto x = draw(rng, 8, 1.0, t % 2 == 0), y = draw(rng, 9, 1.0, t % 2 == 0);
    CHECK(mann_whitney_p_exact(x, y) == doctest::Approx(oracle::mann_whitney_exact_enumeration(x, y)).epsilon(1e-12));
  }
}

TEST_CASE("mann_whitney_p matches exact enumeration for every small size") {
  Rng rng(5);
  double worst = 0.0;
  for (std::size_t total = 2; total <= 12; ++total)
    for (std::size_t m = 1; m < total; ++m)
      for (int rep = 0; rep < 3; ++rep) {
        const auto x = draw(rng, m, 2.0, rep == 0), y = draw(rng, total - m, 2.0, rep == 0);
        worst = std::max(worst, std::abs(mann_whitney_p(x, y) - oracle::mann_whitney_exact_enumeration(x, y)));
      }
  CHECK(worst < 0.02);
}

TEST_CASE("normal approximation tracks the exact distribution at moderate sizes") {
  // continuous samples, group sizes 6..12 each
  Rng rng(6);
  std::uniform_int_distribution<int> size(6, 12);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto x = draw(rng, static_cast<std::size_t>(size(rng)), 1.0, false);
    auto y = draw(rng, static_cast<std::size_t>(size(rng)), 1.0, false);
    for (auto& v : y) v += 0.5 * (t % 4);
    worst = std::max(worst, std::abs(mann_whitney_p_normal(x, y) - mann_whitney_p_exact(x, y)));
  }
  MESSAGE("max |normal - exact| over 200 cases: " << worst);
  CHECK(worst < 0.02);
}

TEST_CASE("mean_wd on hand-built data") {
  dataio::PerturbDataset d;
  d.catalog.names = {"a", "b"};
  d.catalog.perturbed_idx = {0, 1};
  d.counts = (Matrix(6, 2) << 1, 5, 2, 6, 1, 5, 2, 6, 1, 9, 2, 10).finished();
  d.treatments = Matrix::Zero(6, 2);
  d.treatments(2, 0) = d.treatments(3, 0) = 1;  // a-perturbed rows with b ~ controls
  d.treatments(4, 1) = d.treatments(5, 1) = 1;
  d.qc = Vector::Zero(6);
  d.library_size = d.counts.rowwise().sum();
  Matrix p = Matrix::Zero(2, 2);
  p(0, 1) = 0.9;  // a -> b: b has identical control and a-perturbed marginals
  p(1, 1) = 0.9;  // self-loop, never scored
  const auto r = mean_wd(grn::make_graph({"a", "b"}, 2, p, 0.5), d);
  REQUIRE(r.mean_wd.has_value());
  CHECK(r.edges.size() == 1);
  CHECK(*r.mean_wd == doctest::Approx(0.0));

  p.setZero();
  p(1, 0) = 0.9;  // b -> a: a has values {1,2} in both groups
  CHECK(*mean_wd(grn::make_graph({"a", "b"}, 2, p, 0.5), d).mean_wd == doctest::Approx(0.0));
  CHECK_FALSE(mean_wd(grn::make_graph({"a", "b"}, 2, Matrix::Zero(2, 2), 0.5), d).mean_wd.has_value());
}

TEST_CASE("ground-truth graph outscores random graphs on mean WD") {
  const auto [data, truth] = dataio::synthesize_dataset(small_benchmark(1));
  const auto g = truth_graph(data, truth);
  const double truth_wd = *mean_wd(g, data).mean_wd;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    // random graph with the same number of edges on the perturbed sources
    Rng rng(seed);
    const Index n = g.n_nodes();
    Matrix p = Matrix::Zero(n, n);
    std::uniform_int_distribution<Index> src(0, g.n_perturbed - 1), dst(0, n - 1);
    for (std::size_t placed = 0; placed < g.edges.size();) {
      const Index s = src(rng), t = dst(rng);
      if (s == t || p(s, t) != 0.0) continue;
      p(s, t) = 1.0;
      ++placed;
    }
    wins += truth_wd > *mean_wd(grn::make_graph(g.nodes, g.n_perturbed, p, 0.5), data).mean_wd;
  }
  CHECK(wins == 50);
}

TEST_CASE("false omission rate") {
  SUBCASE("complete graph has no negatives") {
    const auto [data, truth] = dataio::synthesize_dataset(small_benchmark(2));
    const Index n = data.catalog.n_causal();
    const auto g = grn::make_graph(data.catalog.causal_names(), data.catalog.n_perturbed(), Matrix::Ones(n, n), 0.5);
    const auto r = false_omission_rate(g, data);
    CHECK(r.for_rate == -1.0);
    CHECK(r.n_sampled == 0);
  }
  SUBCASE("zero knockdown is calibrated") {
    auto config = small_benchmark(3);
    config.knockdown_strength = 0.0;
    const auto [data, truth] = dataio::synthesize_dataset(config);
    const auto g = truth_graph(data, truth);
    const auto r = false_omission_rate(g, data, 500, 0.05, 7);
    CHECK(r.n_sampled == 500);
    CHECK(r.for_rate <= 0.05 + 3.0 * std::sqrt(0.05 / 500.0));
  }
  SUBCASE("labels of existing edges do not matter") {
    const auto [data, truth] = dataio::synthesize_dataset(small_benchmark(4));
    const auto g = truth_graph(data, truth);
    Matrix relabelled = g.prob;
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.51, 1.0);
    for (const auto& e : g.edges) relabelled(e.source, e.target) = u(rng);
    const auto h = grn::make_graph(g.nodes, g.n_perturbed, relabelled, 0.5);
    const auto a = false_omission_rate(g, data, 200, 0.05, 3), b = false_omission_rate(h, data, 200, 0.05, 3);
    CHECK(a.for_rate == b.for_rate);
    CHECK(a.pairs == b.pairs);
  }
  SUBCASE("sampled pairs avoid edges, self-pairs and thin sources") {
    const auto [data, truth] = dataio::synthesize_dataset(small_benchmark(5));
    const auto g = truth_graph(data, truth);
    const auto r = false_omission_rate(g, data, 100000, 0.05, 1);
    CHECK(r.n_sampled == r.n_candidates);
    for (const auto& [s, t] : r.pairs) {
      const Index si = g.find(s), ti = g.find(t);
      CHECK(si != ti);
      CHECK_FALSE(g.has_edge(si, ti));
      CHECK(si < g.n_perturbed);  // extended genes have no perturbed rows
    }
  }
}

TEST_CASE("ground-truth graph has lower FOR than random graphs") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto [data, truth] = dataio::synthesize_dataset(small_benchmark(100 + seed));
    const auto g = truth_graph(data, truth);
    const auto rnd = grn::degree_matched_random(g, seed);
    wins += false_omission_rate(g, data, 500, 0.05, seed).for_rate <
            false_omission_rate(rnd, data, 500, 0.05, seed).for_rate;
  }
  CHECK(wins >= 18);
}

TEST_CASE("metrics report JSON") {
  MetricsReport r;
  r.treatments.push_back({"g0", 0.5, 0.25, 0.4});
  r.treatments.push_back({"g1", std::nullopt, std::nullopt, 0.2});
  r.summarize();
  CHECK(*r.mean_ate_pearson == doctest::Approx(0.5));
  CHECK(*r.mean_jaccard == doctest::Approx(0.3));
  r.config_hash = "abc";
  const auto j = to_json(r);
  CHECK(j["treatments"][1]["ate_pearson"].is_null());
  CHECK(j["grn"]["for_rate"] == -1.0);
  CHECK(j["grn"]["mean_wd"].is_null());
  CHECK(j["provenance"]["config_hash"] == "abc");
}

TEST_CASE("auroc matches pairwise counting, ties included") {
  Rng rng(44);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto scores = draw(rng, 40, 1.0, trial % 2 == 0);
    std::vector<bool> labels(scores.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = coin(rng);
    const auto a = auroc(scores, labels);
    if (std::count(labels.begin(), labels.end(), true) == 0 || std::count(labels.begin(), labels.end(), false) == 0) {
      CHECK_FALSE(a.has_value());
      continue;
    }
    REQUIRE(a.has_value());
    CHECK(*a == doctest::Approx(oracle::auroc_pairwise(scores, labels)).epsilon(1e-12));
  }
  const std::vector<double> s{0.1, 0.9, 0.5};
  CHECK(*auroc(s, {false, true, false}) == 1.0);
  CHECK(*auroc(s, {true, false, true}) == 0.0);
  CHECK_FALSE(auroc(s, {true, true, true}).has_value());
  CHECK_THROWS_AS(auroc(s, {true}), ShapeError);
}

TEST_CASE("edge_auroc ranks off-diagonal pairs from the given sources") {
  Matrix truth = Matrix::Zero(3, 3);
  truth(0, 1) = -0.7;
  truth(2, 0) = 0.5;
  Matrix prob = Matrix::Constant(3, 3, 0.2);
  prob(0, 1) = 0.9;
  prob(0, 0) = 1.0;  // diagonal ignored
  // source 2 excluded: its true edge does not count
  CHECK(*edge_auroc(prob, truth, 2) == 1.0);
  // all sources: the missed edge 2->0 ties with all four negatives
  CHECK(*edge_auroc(prob, truth, 3) == doctest::Approx((1.0 + 0.5) / 2.0));
  CHECK_THROWS_AS(edge_auroc(prob, Matrix::Zero(2, 2), 2), ShapeError);
  CHECK_THROWS_AS(edge_auroc(prob, truth, 4), ConfigError);
}
