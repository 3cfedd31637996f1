#pragma once

// Response-prediction metrics (ATE correlation, R², top-k Jaccard) and graph
// metrics (mean Wasserstein distance over edges, false omission rate) with
// the statistics they rest on.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpo/common.hpp"
#include "gpo/dataio.hpp"
#include "gpo/grn.hpp"
#include "gpo/model.hpp"

namespace gpo::eval {

/// Sample Pearson correlation; nullopt when either vector is constant.
std::optional<double> ate_pearson(const Vector& pred, const Vector& obs);
/// 1 - SS_res / SS_tot with obs as the target; nullopt when SS_tot == 0.
std::optional<double> ate_r2(const Vector& pred, const Vector& obs);
/// Jaccard index of the top-k genes by |value|; ties go to the lower index.
double jaccard_topk(const Vector& pred, const Vector& obs, Index k = 50);
std::vector<Index> top_k_abs(const Vector& v, Index k);

/// Order-1 Wasserstein distance between two empirical distributions.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

/// Two-sided Mann-Whitney U test. Exact permutation distribution when
/// |a| + |b| <= 12, otherwise the tie-corrected normal approximation with
/// continuity correction.
double mann_whitney_p(std::span<const double> a, std::span<const double> b);
double mann_whitney_p_normal(std::span<const double> a, std::span<const double> b);
double mann_whitney_p_exact(std::span<const double> a, std::span<const double> b);

/// Area under the ROC curve of `scores` against binary labels; tied scores
/// count one half. nullopt when either class is empty.
std::optional<double> auroc(std::span<const double> scores, const std::vector<bool>& labels);

/// AUROC of ranking ordered gene pairs (s, t), s != t, by prob(s, t) against
/// the nonzero entries of `truth`. Only sources below `n_sources` are ranked.
std::optional<double> edge_auroc(const Matrix& prob, const Matrix& truth, Index n_sources);

/// log1p counts of gene `gene` (catalog index) over `rows`.
std::vector<double> log1p_expression(const dataio::PerturbDataset& data, Index gene, std::span<const Index> rows);

struct EdgeWd {
  std::string source, target;
  double wd = 0.0;
};

struct WdReport {
  std::optional<double> mean_wd;  // nullopt when no edge could be scored
  std::vector<EdgeWd> edges;
  Index skipped = 0;  // edges without interventional rows for the source
  std::string diagnostic;
};

/// For each non-self-loop edge s->t, WD between log1p expression of t in
/// control rows and in s-perturbed rows.
WdReport mean_wd(const grn::GrnGraph& graph, const dataio::PerturbDataset& data);

struct ForReport {
  double for_rate = -1.0;  // -1 when there are no negatives to sample
  Index n_sampled = 0;
  Index n_false_negatives = 0;
  Index n_candidates = 0;
  std::vector<std::pair<std::string, std::string>> pairs;
};

inline constexpr Index kMinSourceRows = 10;

/// Samples ordered non-edges (s != t) whose source has at least
/// kMinSourceRows perturbed rows; a sampled pair is a false negative when the
/// U test on t (controls vs s-perturbed) gives p <= alpha.
ForReport false_omission_rate(const grn::GrnGraph& graph, const dataio::PerturbDataset& data,
                              Index n_negatives = 500, double alpha = 0.05, std::uint64_t seed = 0);

// ---- report -----------------------------------------------------------------

struct TreatmentMetrics {
  std::string treatment;
  std::optional<double> ate_pearson, ate_r2;
  double jaccard = 0.0;
};

struct MetricsReport {
  std::vector<TreatmentMetrics> treatments;
  std::optional<double> mean_ate_pearson, mean_ate_r2, mean_jaccard;
  std::optional<double> mean_wd;
  double for_rate = -1.0;
  Index n_edges = 0;
  Index n_negatives_sampled = 0;
  std::string config_hash;
  std::uint64_t seed = 0;

  /// Averages the per-treatment values, skipping missing ones.
  void summarize();
};

nlohmann::json to_json(const MetricsReport& report);

struct EvalOptions {
  Index top_k = 50;
  Index particles = 2500;
  Index n_negatives = 500;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

/// Response metrics for every perturbed gene with rows in `test` (skipped
/// when `state` is null), and graph metrics of `graph` on `graph_data`.
MetricsReport evaluate(const model::ModelState* state, const dataio::PerturbDataset& test, const grn::GrnGraph& graph,
                       const dataio::PerturbDataset& graph_data, const EvalOptions& options = {});

}  // namespace gpo::eval
