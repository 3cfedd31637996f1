#pragma once

// Loss terms on a single mini-batch: the reconstruction ELBO, the
// artifact-disentanglement divergence, and the graph objective on the causal
// probabilities (differential-expression fit plus sparsity).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gpo/common.hpp"
#include "gpo/dataio.hpp"
#include "gpo/diffcore.hpp"
#include "gpo/model.hpp"

namespace gpo::objective {

using diffcore::Tape;
using diffcore::Var;
using model::GaussianVar;

enum class Ablation { full, sp_only, dge_only, dge_k_only };

std::string to_string(Ablation a);
Ablation parse_ablation(const std::string& text);

/// Everything a loss evaluation needs about a set of rows, as constants.
struct Batch {
  Matrix counts;       // B x |G|
  Matrix features;     // B x |G|, standardized log1p
  Matrix treatments;   // B x T
  Vector qc;           // B
  Matrix log_library;  // B x 1
  Matrix dge;          // B x T reference profiles
  std::vector<char> dge_excluded;
  std::vector<Index> ade_rows;  // batch positions with a QC-pass reference
  Matrix ade_reference;         // |ade_rows| x |G|, standardized features of the references
  Index n_total = 0;            // rows in the split, for amortizing global terms

  Index size() const { return counts.rows(); }
};

/// Gathers `rows` of `data`; `qc_reference[n]` is a row of `data` (or -1).
Batch make_batch(const model::ModelState& state, const dataio::PerturbDataset& data,
                 std::span<const Index> rows, const dataio::ReferenceDge& dge,
                 const std::vector<Index>& qc_reference);

/// Latent draws and decoder output for one batch.
struct ForwardPass {
  Var mask;
  GaussianVar effect_q;
  Var effects;
  GaussianVar artifact_q;
  Var u;
  Var z_p, z_a, z_a_cf;
  GaussianVar basal_q;
  Var z_b;
  Var log_rate;
  Var loglik;  // B x 1
};

ForwardPass forward(const model::ModelVars& vars, const model::ModelState& state, const Batch& batch,
                    const model::StepNoise& noise, double temperature, model::MaskMode mode);

// ---- divergences ---------------------------------------------------------------

/// sum KL(N(mean, scale) || N(0, 1)).
Var gaussian_kl_standard(const GaussianVar& q);
/// sum KL(N(mq, sq) || N(mp, sp)) over all entries.
Var gaussian_kl(const GaussianVar& q, const GaussianVar& p);
/// sum KL(Bernoulli(sigmoid(logits)) || Bernoulli(prior)).
Var bernoulli_kl(const Var& logits, double prior);

double gaussian_kl_standard(double mean, double scale);
double gaussian_kl(double mq, double sq, double mp, double sp);

// ---- loss terms ------------------------------------------------------------------

/// Per-cell ELBO: batch mean of log-likelihood plus kl_weight times the
/// basal log-density ratio, minus kl_weight * (global KLs) / n_total.
Var elbo(const Batch& batch, const ForwardPass& pass, const model::ModelVars& vars, const model::StepNoise& noise,
         double kl_weight, double mask_prior);

/// KL(q_cf || q_ref) summed over entries.
Var ade_loss(const GaussianVar& q_cf, const GaussianVar& q_ref);
/// Counterfactual posteriors for the batch's ADE rows, divided by batch size.
Var ade_term(const model::ModelVars& vars, const Batch& batch, const ForwardPass& pass);

/// mean over included rows of || P T - dX ||_1; 0 when every row is excluded.
Var dge_loss(const Var& t, const Matrix& treatments, const Matrix& dge, const std::vector<char>& excluded,
             bool* all_excluded = nullptr);
double dge_loss(const Matrix& t, const Matrix& treatments, const Matrix& dge, const std::vector<char>& excluded);

struct GpoVars {
  Var j_dge_k, j_sp, j_gpo;
};
GpoVars gpo_loss(const Var& logits, const Matrix& treatments, const Matrix& dge, int k_hops,
                 const std::vector<char>& excluded, Ablation ablation = Ablation::full);

struct LossWeights {
  double alpha = 1.0;
  double beta = 1.0;
  double kl_weight = 0.1;
  int k_hops = 5;
  double mask_prior = 0.3;
  Ablation ablation = Ablation::full;
};

struct LossBreakdown {
  double j_rec = 0, j_ade = 0, j_dge_k = 0, j_sp = 0, j_gpo = 0, total = 0;
  double alpha = 0, beta = 0;
  int k_hops = 0;
};

struct LossVars {
  Var j_rec, j_ade, j_dge_k, j_sp, j_gpo, total;
};

/// total = -j_rec + alpha * j_ade + beta * j_gpo.
LossVars total_loss(const Var& j_rec, const Var& j_ade, const GpoVars& gpo, double alpha, double beta);
LossBreakdown breakdown(const LossVars& v, const LossWeights& w);

/// Full loss for one batch on `tape`.
LossVars batch_loss(Tape& tape, const model::ModelVars& vars, const model::ModelState& state, const Batch& batch,
                    const model::StepNoise& noise, double temperature, model::MaskMode mode, const LossWeights& w);

std::string to_json_line(const LossBreakdown& b, long step);

}  // namespace gpo::objective
