#include "gpo/objective.hpp"

#include <cmath>
#include <cstdio>

#include "gpo/special.hpp"

namespace gpo::objective {

using namespace diffcore;

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::sp_only: return "sp_only";
    case Ablation::dge_only: return "dge_only";
    case Ablation::dge_k_only: return "dge_k_only";
  }
  return "full";
}

Ablation parse_ablation(const std::string& text) {
  if (text == "full") return Ablation::full;
  if (text == "sp_only") return Ablation::sp_only;
  if (text == "dge_only") return Ablation::dge_only;
  if (text == "dge_k_only") return Ablation::dge_k_only;
  throw ConfigError("unknown ablation '" + text + "' (expected full, sp_only, dge_only or dge_k_only)");
}

Batch make_batch(const model::ModelState& state, const dataio::PerturbDataset& data, std::span<const Index> rows,
                 const dataio::ReferenceDge& dge, const std::vector<Index>& qc_reference) {
  const Index b = static_cast<Index>(rows.size());
  Batch out;
  out.counts.resize(b, data.counts.cols());
  out.treatments.resize(b, data.treatments.cols());
  out.qc.resize(b);
  out.log_library.resize(b, 1);
  out.dge.resize(b, data.treatments.cols());
  out.dge_excluded.resize(static_cast<std::size_t>(b));
  std::vector<Index> refs;
  for (Index k = 0; k < b; ++k) {
    const Index n = rows[static_cast<std::size_t>(k)];
    out.counts.row(k) = data.counts.row(n);
    out.treatments.row(k) = data.treatments.row(n);
    out.qc(k) = data.qc(n);
    if (!(data.library_size(n) > 0.0)) throw ValidationError("batch: row " + std::to_string(n) + " has zero library size");
    out.log_library(k, 0) = std::log(data.library_size(n));
    out.dge.row(k) = dge.delta.row(n);
    out.dge_excluded[static_cast<std::size_t>(k)] = dge.excluded[static_cast<std::size_t>(n)];
    const Index ref = qc_reference.empty() ? -1 : qc_reference[static_cast<std::size_t>(n)];
    if (ref >= 0) {
      out.ade_rows.push_back(k);
      refs.push_back(ref);
    }
  }
  out.features = model::basal_features(state, out.counts);
  Matrix ref_counts(static_cast<Index>(refs.size()), data.counts.cols());
  for (std::size_t k = 0; k < refs.size(); ++k) ref_counts.row(static_cast<Index>(k)) = data.counts.row(refs[k]);
  out.ade_reference = model::basal_features(state, ref_counts);
  out.n_total = data.n_cells();
  return out;
}

ForwardPass forward(const model::ModelVars& vars, const model::ModelState& state, const Batch& batch,
                    const model::StepNoise& noise, double temperature, model::MaskMode mode) {
  (void)state;
  Tape& tape = *vars.logits.tape();
  ForwardPass f;
  f.mask = model::mask_from_noise(vars.logits, noise.mask, temperature, mode);
  f.effect_q = model::effect_posterior(vars, f.mask);
  f.effects = model::reparameterize(f.effect_q, noise.effect_eps);
  f.artifact_q = {vars.artifact_mu, exp(vars.artifact_log_sigma)};
  f.u = model::reparameterize(f.artifact_q, noise.artifact_eps);
  f.z_p = model::encode_perturbation(tape.constant(batch.treatments), f.effects, f.mask);
  const Matrix a = batch.qc;
  f.z_a = matmul(tape.constant(a), f.u);
  f.z_a_cf = matmul(tape.constant(Matrix::Ones(a.rows(), 1) - a), f.u);
  f.basal_q = model::encode_basal(vars, tape.constant(batch.features), f.z_p, f.z_a);
  f.z_b = model::reparameterize(f.basal_q, noise.basal_eps);
  f.log_rate = model::decode_log_rate(vars, f.z_b, f.z_p, f.z_a, batch.log_library);
  f.loglik = model::nb_log_likelihood(batch.counts, f.log_rate, vars.log_theta);
  return f;
}

// ---- divergences ---------------------------------------------------------------

Var gaussian_kl_standard(const GaussianVar& q) {
  return 0.5 * sum(square(q.scale) + square(q.mean) - 1.0 - 2.0 * log(q.scale));
}

Var gaussian_kl(const GaussianVar& q, const GaussianVar& p) {
  if (q.mean.rows() != p.mean.rows() || q.mean.cols() != p.mean.cols())
    throw ShapeError("gaussian_kl: dimension mismatch " + shape_str(q.mean.value()) + " vs " +
                     shape_str(p.mean.value()));
  const Var ratio = divide(square(q.scale) + square(q.mean - p.mean), square(p.scale));
  return sum(log(p.scale) - log(q.scale) + 0.5 * ratio - 0.5);
}

Var bernoulli_kl(const Var& logits, double prior) {
  const Var p = diffcore::sigmoid(logits);
  const Var log_p = -diffcore::softplus(-logits);
  const Var log_q = -diffcore::softplus(logits);
  return sum(hadamard(p, log_p - std::log(prior)) + hadamard(1.0 - p, log_q - std::log1p(-prior)));
}

double gaussian_kl_standard(double mean, double scale) {
  return 0.5 * (scale * scale + mean * mean - 1.0 - 2.0 * std::log(scale));
}

double gaussian_kl(double mq, double sq, double mp, double sp) {
  return std::log(sp / sq) + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5;
}

// ---- loss terms ------------------------------------------------------------------

Var elbo(const Batch& batch, const ForwardPass& pass, const model::ModelVars& vars, const model::StepNoise& noise,
         double kl_weight, double mask_prior) {
  const Index b = batch.size();
  if (pass.loglik.rows() != b || noise.basal_eps.rows() != b) throw ShapeError("elbo: batch and latents disagree");
  if (batch.n_total < b) throw ShapeError("elbo: n_total smaller than the batch");
  // log p(z_b) - log q(z_b | .) for z_b = mean + scale * eps; constants cancel.
  const Var density_ratio =
      -0.5 * sum(square(pass.z_b)) + 0.5 * noise.basal_eps.squaredNorm() + sum(log(pass.basal_q.scale));
  const Var local = (sum(pass.loglik) + kl_weight * density_ratio) * (1.0 / static_cast<double>(b));
  const Var global = bernoulli_kl(vars.logits, mask_prior) + gaussian_kl_standard(pass.effect_q) +
                     gaussian_kl_standard(pass.artifact_q);
  return local - (kl_weight / static_cast<double>(batch.n_total)) * global;
}

Var ade_loss(const GaussianVar& q_cf, const GaussianVar& q_ref) { return gaussian_kl(q_cf, q_ref); }

Var ade_term(const model::ModelVars& vars, const Batch& batch, const ForwardPass& pass) {
  Tape& tape = *vars.logits.tape();
  if (batch.ade_rows.empty()) return tape.constant(Matrix::Zero(1, 1));
  const Var z_p = gather_rows(pass.z_p, batch.ade_rows);
  const Var z_a_cf = gather_rows(pass.z_a_cf, batch.ade_rows);
  Matrix feats(static_cast<Index>(batch.ade_rows.size()), batch.features.cols());
  for (std::size_t k = 0; k < batch.ade_rows.size(); ++k)
    feats.row(static_cast<Index>(k)) = batch.features.row(batch.ade_rows[k]);
  const GaussianVar q_cf = model::encode_basal(vars, tape.constant(feats), z_p, z_a_cf);
  const GaussianVar q_ref = model::encode_basal(vars, tape.constant(batch.ade_reference), z_p, z_a_cf);
  return ade_loss(q_cf, q_ref) * (1.0 / static_cast<double>(batch.size()));
}

namespace {

std::vector<Index> included_rows(const Matrix& treatments, const Matrix& dge, const std::vector<char>& excluded) {
  if (treatments.rows() != dge.rows() || static_cast<std::size_t>(dge.rows()) != excluded.size())
    throw ShapeError("dge_loss: row counts differ");
  std::vector<Index> rows;
  for (Index n = 0; n < dge.rows(); ++n)
    if (!excluded[static_cast<std::size_t>(n)]) rows.push_back(n);
  return rows;
}

}  // namespace

Var dge_loss(const Var& t, const Matrix& treatments, const Matrix& dge, const std::vector<char>& excluded,
             bool* all_excluded) {
  if (t.rows() != t.cols() || treatments.cols() != t.rows() || dge.cols() != t.cols())
    throw ShapeError("dge_loss: T " + shape_str(t.value()) + ", P " + shape_str(treatments) + ", dX " +
                     shape_str(dge));
  const auto rows = included_rows(treatments, dge, excluded);
  Tape& tape = *t.tape();
  if (all_excluded) *all_excluded = rows.empty();
  if (rows.empty()) return tape.constant(Matrix::Zero(1, 1));
  Matrix p(static_cast<Index>(rows.size()), treatments.cols()), x(static_cast<Index>(rows.size()), dge.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    p.row(static_cast<Index>(k)) = treatments.row(rows[k]);
    x.row(static_cast<Index>(k)) = dge.row(rows[k]);
  }
  return l1_norm(matmul(tape.constant(p), t) - tape.constant(x)) * (1.0 / static_cast<double>(rows.size()));
}

double dge_loss(const Matrix& t, const Matrix& treatments, const Matrix& dge, const std::vector<char>& excluded) {
  Tape tape;
  return dge_loss(tape.constant(t), treatments, dge, excluded).scalar();
}

GpoVars gpo_loss(const Var& logits, const Matrix& treatments, const Matrix& dge, int k_hops,
                 const std::vector<char>& excluded, Ablation ablation) {
  if (k_hops < 1) throw ConfigError("gpo_loss: K must be >= 1");
  Tape& tape = *logits.tape();
  const Var prob = diffcore::sigmoid(logits);
  const double n = static_cast<double>(logits.rows());
  const Var zero = tape.constant(Matrix::Zero(1, 1));
  GpoVars g;
  const bool use_dge = ablation != Ablation::sp_only;
  const bool use_sp = ablation == Ablation::full || ablation == Ablation::sp_only;
  const int k = ablation == Ablation::dge_only ? 1 : k_hops;
  g.j_dge_k = use_dge ? dge_loss(matrix_power_sum(prob, k, 1.0 / n), treatments, dge, excluded) : zero;
  g.j_sp = use_sp ? l1_norm(prob) * (1.0 / (n * n)) : zero;
  g.j_gpo = g.j_dge_k + g.j_sp;
  return g;
}

LossVars total_loss(const Var& j_rec, const Var& j_ade, const GpoVars& gpo, double alpha, double beta) {
  LossVars v{j_rec, j_ade, gpo.j_dge_k, gpo.j_sp, gpo.j_gpo, {}};
  v.total = -j_rec + alpha * j_ade + beta * gpo.j_gpo;
  return v;
}

LossBreakdown breakdown(const LossVars& v, const LossWeights& w) {
  LossBreakdown b;
  b.j_rec = v.j_rec.scalar();
  b.j_ade = v.j_ade.scalar();
  b.j_dge_k = v.j_dge_k.scalar();
  b.j_sp = v.j_sp.scalar();
  b.j_gpo = v.j_gpo.scalar();
  b.total = v.total.scalar();
  b.alpha = w.alpha;
  b.beta = w.beta;
  b.k_hops = w.ablation == Ablation::dge_only ? 1 : w.k_hops;
  return b;
}

LossVars batch_loss(Tape& tape, const model::ModelVars& vars, const model::ModelState& state, const Batch& batch,
                    const model::StepNoise& noise, double temperature, model::MaskMode mode, const LossWeights& w) {
  (void)tape;
  const ForwardPass pass = forward(vars, state, batch, noise, temperature, mode);
  const Var j_rec = elbo(batch, pass, vars, noise, w.kl_weight, w.mask_prior);
  const Var j_ade = ade_term(vars, batch, pass);
  const GpoVars gpo = gpo_loss(vars.logits, batch.treatments, batch.dge, w.k_hops, batch.dge_excluded, w.ablation);
  return total_loss(j_rec, j_ade, gpo, w.alpha, w.beta);
}

std::string to_json_line(const LossBreakdown& b, long step) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "{\"step\":%ld,\"j_rec\":%.17g,\"j_ade\":%.17g,\"j_dge_k\":%.17g,\"j_sp\":%.17g,\"j_gpo\":%.17g,"
                "\"total\":%.17g}",
                step, b.j_rec, b.j_ade, b.j_dge_k, b.j_sp, b.j_gpo, b.total);
  return buf;
}

}  // namespace gpo::objective
