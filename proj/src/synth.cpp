#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gpo/dataio.hpp"

namespace gpo::dataio {

void SynthConfig::validate() const {
  if (n_perturbed < 1) throw ConfigError("synthesis: need at least one perturbed gene");
  if (n_extended < 0 || n_measured < 0) throw ConfigError("synthesis: gene counts must be non-negative");
  if (n_cells < 2 * n_perturbed) throw ConfigError("synthesis: N must be at least 2*|G°|");
  if (!(edge_density > 0.0 && edge_density < 1.0)) throw ConfigError("synthesis: edge density must lie in (0,1)");
  const Index t = n_perturbed + n_extended;
  if (std::llround(edge_density * static_cast<double>(t * (t - 1)) / 2.0) < 1)
    throw ConfigError("synthesis: edge density yields zero edges for " + std::to_string(t) + " genes");
  if (knockdown_strength < 0.0) throw ConfigError("synthesis: knockdown strength must be >= 0");
  if (!(artifact_rate >= 0.0 && artifact_rate <= 1.0)) throw ConfigError("synthesis: artifact rate must lie in [0,1]");
  if (!(dispersion > 0.0)) throw ConfigError("synthesis: dispersion must be positive");
  if (!(control_fraction > 0.0 && control_fraction < 1.0))
    throw ConfigError("synthesis: control fraction must lie in (0,1)");
  if (!(min_edge_weight > 0.0 && max_edge_weight >= min_edge_weight))
    throw ConfigError("synthesis: edge weight range invalid");
  if (!(min_base_mean > 0.0 && max_base_mean >= min_base_mean))
    throw ConfigError("synthesis: base mean range invalid");
}

std::pair<PerturbDataset, GroundTruthGrn> synthesize_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const Index n_pert = cfg.n_perturbed, n_ext = cfg.n_extended;
  const Index n_causal = n_pert + n_ext;
  const Index n_genes = n_causal + cfg.n_measured;
  const Index n_cells = cfg.n_cells;

  // Catalog: causal genes first (perturbed, extended), then measured-only genes.
  PerturbDataset d;
  char buf[32];
  for (Index g = 0; g < n_pert; ++g) {
    std::snprintf(buf, sizeof buf, "p%03ld", static_cast<long>(g));
    d.catalog.names.emplace_back(buf);
    d.catalog.perturbed_idx.push_back(g);
  }
  for (Index g = 0; g < n_ext; ++g) {
    std::snprintf(buf, sizeof buf, "e%03ld", static_cast<long>(g));
    d.catalog.names.emplace_back(buf);
    d.catalog.extended_idx.push_back(n_pert + g);
  }
  for (Index g = 0; g < cfg.n_measured; ++g) {
    std::snprintf(buf, sizeof buf, "m%03ld", static_cast<long>(g));
    d.catalog.names.emplace_back(buf);
  }

  // Random DAG: a random topological order, then a uniform choice of
  // order-compatible pairs.
  Rng graph_rng = make_rng(cfg.seed, 1);
  std::vector<Index> order(n_causal);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), graph_rng);
  std::vector<std::pair<Index, Index>> candidates;
  for (Index a = 0; a < n_causal; ++a)
    for (Index b = a + 1; b < n_causal; ++b) candidates.emplace_back(order[a], order[b]);
  std::shuffle(candidates.begin(), candidates.end(), graph_rng);
  const auto n_edges = static_cast<std::size_t>(
      std::llround(cfg.edge_density * static_cast<double>(candidates.size())));
  GroundTruthGrn truth;
  truth.adjacency = Matrix::Zero(n_causal, n_causal);
  std::uniform_real_distribution<double> weight(cfg.min_edge_weight, cfg.max_edge_weight);
  std::bernoulli_distribution negative(cfg.negative_edge_fraction);
  for (std::size_t e = 0; e < n_edges; ++e) {
    const auto [s, t] = candidates[e];
    const double w = weight(graph_rng);
    truth.adjacency(s, t) = negative(graph_rng) ? -w : w;
  }

  // Log-scale response of every causal gene to a knockdown of gene i: the
  // walk sum -s * e_i (I - A)^{-1}, evaluated in topological order.
  Matrix shift = Matrix::Zero(n_causal, n_genes);
  for (Index i = 0; i < n_causal; ++i) {
    Vector delta = Vector::Zero(n_causal);
    delta(i) = -cfg.knockdown_strength;
    for (Index a = 0; a < n_causal; ++a) {
      const Index v = order[a];
      if (delta(v) == 0.0) continue;
      for (Index c = 0; c < n_causal; ++c)
        if (truth.adjacency(v, c) != 0.0) delta(c) += truth.adjacency(v, c) * delta(v);
    }
    shift.row(i).head(n_causal) = delta.transpose();
  }

  Rng expr_rng = make_rng(cfg.seed, 2);
  std::uniform_real_distribution<double> log_mean(std::log(cfg.min_base_mean), std::log(cfg.max_base_mean));
  RowVector base(n_genes);
  for (Index g = 0; g < n_genes; ++g) base(g) = log_mean(expr_rng);
  std::normal_distribution<double> artifact_shift(0.0, cfg.artifact_log_sd);
  RowVector artifact(n_genes);
  for (Index g = 0; g < n_genes; ++g) artifact(g) = artifact_shift(expr_rng);

  // Treatments: controls, then perturbed genes round-robin; shuffled.
  const auto n_control = std::max<Index>(1, std::llround(cfg.control_fraction * static_cast<double>(n_cells)));
  std::vector<Index> assignment(n_cells, -1);
  for (Index n = n_control; n < n_cells; ++n) assignment[n] = (n - n_control) % n_pert;
  std::shuffle(assignment.begin(), assignment.end(), expr_rng);

  d.counts.resize(n_cells, n_genes);
  d.treatments = Matrix::Zero(n_cells, n_causal);
  d.qc.resize(n_cells);
  std::bernoulli_distribution has_artifact(cfg.artifact_rate);
  std::normal_distribution<double> lib(0.0, cfg.library_log_sd);
  for (Index n = 0; n < n_cells; ++n) {
    const Index t = assignment[n];
    if (t >= 0) d.treatments(n, t) = 1.0;
    const bool art = has_artifact(expr_rng);
    d.qc(n) = art ? 1.0 : 0.0;
    const double lib_shift = lib(expr_rng);
    for (Index g = 0; g < n_genes; ++g) {
      double log_mu = base(g) + lib_shift;
      if (t >= 0) log_mu += shift(t, g);
      if (art) log_mu += artifact(g);
      const double mu = std::exp(log_mu);
      std::gamma_distribution<double> gamma(cfg.dispersion, mu / cfg.dispersion);
      const double rate = gamma(expr_rng);
      std::poisson_distribution<long> pois(rate);
      d.counts(n, g) = rate > 0 ? static_cast<double>(pois(expr_rng)) : 0.0;
    }
  }
  d.library_size = d.counts.rowwise().sum();
  d.validate();
  return {std::move(d), std::move(truth)};
}

}  // namespace gpo::dataio
