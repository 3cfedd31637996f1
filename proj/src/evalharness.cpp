#include "gpo/evalharness.hpp"

#include "gpo/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gpo::eval {

namespace {

constexpr std::uint64_t kNegativeSampleStream = 0x6e656761;

void check_pair(const Vector& pred, const Vector& obs, const char* what) {
  if (pred.size() != obs.size())
    throw ShapeError(std::string(what) + ": lengths differ (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(obs.size()) + ")");
  if (pred.size() < 2) throw ShapeError(std::string(what) + ": need at least 2 values");
}

std::vector<double> midranks(const std::vector<double>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[order[j]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = r;
    i = j;
  }
  return rank;
}

std::vector<double> pool(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw EvaluationError("mann_whitney_p: both samples must be non-empty");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  return pooled;
}

double u_statistic(const std::vector<double>& rank, std::size_t m) {
  double r = 0.0;
  for (std::size_t i = 0; i < m; ++i) r += rank[i];
  return r - 0.5 * static_cast<double>(m * (m + 1));
}

}  // namespace

// ---- response metrics -----------------------------------------------------------

std::optional<double> ate_pearson(const Vector& pred, const Vector& obs) {
  check_pair(pred, obs, "ate_pearson");
  const Vector dp = pred.array() - pred.mean();
  const Vector dobs = obs.array() - obs.mean();
  const double sp = dp.squaredNorm(), so = dobs.squaredNorm();
  if (sp == 0.0 || so == 0.0) return std::nullopt;
  return std::clamp(dp.dot(dobs) / std::sqrt(sp * so), -1.0, 1.0);
}

std::optional<double> ate_r2(const Vector& pred, const Vector& obs) {
  check_pair(pred, obs, "ate_r2");
  const double ss_tot = (obs.array() - obs.mean()).square().sum();
  if (ss_tot == 0.0) return std::nullopt;
  return 1.0 - (obs - pred).squaredNorm() / ss_tot;
}

std::vector<Index> top_k_abs(const Vector& v, Index k) {
  if (k < 1 || k > v.size())
    throw ConfigError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(v.size()) + "]");
  std::vector<Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return std::abs(v(a)) > std::abs(v(b)); });
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

double jaccard_topk(const Vector& pred, const Vector& obs, Index k) {
  if (pred.size() != obs.size()) throw ShapeError("jaccard_topk: lengths differ");
  const auto a = top_k_abs(pred, k), b = top_k_abs(obs, k);
  std::vector<Index> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const double i = static_cast<double>(inter.size());
  return i / (2.0 * static_cast<double>(k) - i);
}

// ---- distribution statistics ----------------------------------------------------------

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw EvaluationError("wasserstein_1d: both samples must be non-empty");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  // Quantile functions are step functions with breaks at i/n and j/m; walk
  // both in units of 1/(n m) to keep the breakpoints exact.
  const std::uint64_t n = x.size(), m = y.size();
  std::uint64_t i = 0, j = 0, pos = 0;
  double acc = 0.0;
  while (i < n && j < m) {
    const std::uint64_t next = std::min((i + 1) * m, (j + 1) * n);
    acc += static_cast<double>(next - pos) * std::abs(x[i] - y[j]);
    pos = next;
    if ((i + 1) * m == next) ++i;
    if ((j + 1) * n == next) ++j;
  }
  return acc / static_cast<double>(n * m);
}

double mann_whitney_p_normal(std::span<const double> a, std::span<const double> b) {
  const auto pooled = pool(a, b);
  const auto rank = midranks(pooled);
  const double m = static_cast<double>(a.size()), n = static_cast<double>(b.size()), total = m + n;
  const double u = u_statistic(rank, a.size());

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = m * n / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double dev = std::max(0.0, std::abs(u - 0.5 * m * n) - 0.5);
  return std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0)));
}

double mann_whitney_p_exact(std::span<const double> a, std::span<const double> b) {
  const auto pooled = pool(a, b);
  const auto rank = midranks(pooled);
  const std::size_t m = a.size(), total = pooled.size();
  // Midranks are multiples of 1/2, so doubled ranks are integers. count[j][s]
  // is the number of j-subsets of the pooled sample with doubled rank sum s.
  std::vector<int> doubled(total);
  int max_sum = 0;
  for (std::size_t i = 0; i < total; ++i) {
    doubled[i] = static_cast<int>(std::lround(2.0 * rank[i]));
    max_sum += doubled[i];
  }
  std::vector<std::vector<double>> count(m + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
  count[0][0] = 1.0;
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = std::min(m, i + 1); j >= 1; --j)
      for (int s = max_sum; s >= doubled[i]; --s) count[j][s] += count[j - 1][s - doubled[i]];

  const double centre = 0.5 * static_cast<double>(m * b.size());
  const double offset = 0.5 * static_cast<double>(m * (m + 1));
  const double observed = std::abs(u_statistic(rank, m) - centre);
  double extreme = 0.0, all = 0.0;
  for (int s = 0; s <= max_sum; ++s) {
    const double c = count[m][s];
    if (c == 0.0) continue;
    all += c;
    if (std::abs(0.5 * s - offset - centre) >= observed - 1e-9) extreme += c;
  }
  return std::min(1.0, extreme / all);
}

double mann_whitney_p(std::span<const double> a, std::span<const double> b) {
  return a.size() + b.size() <= 12 ? mann_whitney_p_exact(a, b) : mann_whitney_p_normal(a, b);
}

std::optional<double> auroc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auroc: scores and labels differ in length");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty()) return std::nullopt;
  const auto rank = midranks(pool(pos, neg));
  return u_statistic(rank, pos.size()) / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::optional<double> edge_auroc(const Matrix& prob, const Matrix& truth, Index n_sources) {
  if (prob.rows() != truth.rows() || prob.cols() != truth.cols() || prob.rows() != prob.cols())
    throw ShapeError("edge_auroc: probability and truth matrices must be square and equal in shape");
  if (n_sources < 0 || n_sources > prob.rows()) throw ConfigError("edge_auroc: n_sources out of range");
  std::vector<double> scores;
  std::vector<bool> labels;
  for (Index s = 0; s < n_sources; ++s)
    for (Index t = 0; t < prob.cols(); ++t) {
      if (s == t) continue;
      scores.push_back(prob(s, t));
      labels.push_back(truth(s, t) != 0.0);
    }
  return auroc(scores, labels);
}

// ---- graph metrics -----------------------------------------------------------------

std::vector<double> log1p_expression(const dataio::PerturbDataset& data, Index gene, std::span<const Index> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(std::log1p(data.counts(r, gene)));
  return out;
}

WdReport mean_wd(const grn::GrnGraph& graph, const dataio::PerturbDataset& data) {
  WdReport report;
  const auto controls = data.rows_with_treatment(-1);
  double sum = 0.0;
  for (const auto& e : graph.edges) {
    if (e.source == e.target) continue;
    const std::string& s = graph.nodes[e.source];
    const std::string& t = graph.nodes[e.target];
    const auto pos = data.catalog.causal_position(s);
    const auto gene = data.catalog.find(t);
    std::vector<Index> treated;
    if (pos) treated = data.rows_with_treatment(*pos);
    if (treated.empty() || controls.empty() || !gene) {
      ++report.skipped;
      continue;
    }
    const double wd = wasserstein_1d(log1p_expression(data, *gene, controls), log1p_expression(data, *gene, treated));
    report.edges.push_back({s, t, wd});
    sum += wd;
  }
  if (report.edges.empty())
    report.diagnostic = "no scorable edges (" + std::to_string(graph.edges.size()) + " edges, " +
                        std::to_string(report.skipped) + " without interventional rows)";
  else
    report.mean_wd = sum / static_cast<double>(report.edges.size());
  return report;
}

ForReport false_omission_rate(const grn::GrnGraph& graph, const dataio::PerturbDataset& data, Index n_negatives,
                              double alpha, std::uint64_t seed) {
  if (n_negatives < 1) throw ConfigError("false_omission_rate: n_negatives must be positive");
  const Index n = graph.n_nodes();
  std::vector<std::vector<Index>> source_rows(static_cast<std::size_t>(n));
  std::vector<Index> gene_of(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    if (const auto pos = data.catalog.causal_position(graph.nodes[i])) source_rows[i] = data.rows_with_treatment(*pos);
    if (const auto g = data.catalog.find(graph.nodes[i])) gene_of[i] = *g;
  }
  std::vector<std::pair<Index, Index>> candidates;
  for (Index s = 0; s < n; ++s) {
    if (static_cast<Index>(source_rows[s].size()) < kMinSourceRows) continue;
    for (Index t = 0; t < n; ++t)
      if (t != s && gene_of[t] >= 0 && !graph.has_edge(s, t)) candidates.emplace_back(s, t);
  }
  ForReport report;
  report.n_candidates = static_cast<Index>(candidates.size());
  if (candidates.empty()) return report;

  Rng rng = make_rng(seed, kNegativeSampleStream);
  const std::size_t take = std::min(candidates.size(), static_cast<std::size_t>(n_negatives));
  for (std::size_t k = 0; k < take; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
    std::swap(candidates[k], candidates[pick(rng)]);
  }
  candidates.resize(take);

  const auto controls = data.rows_with_treatment(-1);
  if (controls.empty()) throw EvaluationError("false_omission_rate: dataset has no control rows");
  for (const auto& [s, t] : candidates) {
    const double p = mann_whitney_p(log1p_expression(data, gene_of[t], controls),
                                    log1p_expression(data, gene_of[t], source_rows[s]));
    if (p <= alpha) ++report.n_false_negatives;
    report.pairs.emplace_back(graph.nodes[s], graph.nodes[t]);
  }
  report.n_sampled = static_cast<Index>(take);
  report.for_rate = static_cast<double>(report.n_false_negatives) / static_cast<double>(take);
  return report;
}

// ---- report ------------------------------------------------------------------------

void MetricsReport::summarize() {
  auto mean_of = [&](auto get) -> std::optional<double> {
    double s = 0.0;
    int c = 0;
    for (const auto& t : treatments)
      if (const std::optional<double> v = get(t)) {
        s += *v;
        ++c;
      }
    if (c == 0) return std::nullopt;
    return s / c;
  };
  mean_ate_pearson = mean_of([](const TreatmentMetrics& t) { return t.ate_pearson; });
  mean_ate_r2 = mean_of([](const TreatmentMetrics& t) { return t.ate_r2; });
  mean_jaccard = mean_of([](const TreatmentMetrics& t) { return std::optional<double>(t.jaccard); });
}

nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json per = nlohmann::json::array();
  for (const auto& t : r.treatments)
    per.push_back({{"treatment", t.treatment},
                   {"ate_pearson", opt(t.ate_pearson)},
                   {"ate_r2", opt(t.ate_r2)},
                   {"jaccard_topk", t.jaccard}});
  return {{"treatments", per},
          {"mean",
           {{"ate_pearson", opt(r.mean_ate_pearson)},
            {"ate_r2", opt(r.mean_ate_r2)},
            {"jaccard_topk", opt(r.mean_jaccard)}}},
          {"grn",
           {{"mean_wd", opt(r.mean_wd)},
            {"for_rate", r.for_rate},
            {"n_edges", r.n_edges},
            {"n_negatives_sampled", r.n_negatives_sampled}}},
          {"provenance", {{"config_hash", r.config_hash}, {"seed", r.seed}}}};
}

MetricsReport evaluate(const model::ModelState* state, const dataio::PerturbDataset& test, const grn::GrnGraph& graph,
                       const dataio::PerturbDataset& graph_data, const EvalOptions& options) {
  MetricsReport report;
  report.seed = options.seed;
  if (state) {
    const Index k = std::min<Index>(options.top_k, test.catalog.n_genes());
    const auto names = test.catalog.causal_names();
    for (Index pos = 0; pos < test.catalog.n_perturbed(); ++pos) {
      if (test.rows_with_treatment(pos).empty()) continue;
      const auto pred = inference::estimate_ate(*state, names[static_cast<std::size_t>(pos)], options.particles,
                                                options.seed);
      const Vector obs = inference::observed_ate(test, pos);
      TreatmentMetrics t;
      t.treatment = names[static_cast<std::size_t>(pos)];
      t.ate_pearson = ate_pearson(pred.ate, obs);
      t.ate_r2 = ate_r2(pred.ate, obs);
      t.jaccard = jaccard_topk(pred.ate, obs, k);
      report.treatments.push_back(std::move(t));
    }
  }
  report.summarize();
  report.n_edges = static_cast<Index>(graph.edges.size());
  report.mean_wd = mean_wd(graph, graph_data).mean_wd;
  const ForReport f = false_omission_rate(graph, graph_data, options.n_negatives, options.alpha, options.seed);
  report.for_rate = f.for_rate;
  report.n_negatives_sampled = f.n_sampled;
  return report;
}

}  // namespace gpo::eval
