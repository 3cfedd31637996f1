#include "gpo/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "gpo/special.hpp"

namespace gpo::inference {

namespace {

constexpr std::uint64_t kParticleBasalStream = 0x70626173;
constexpr std::uint64_t kParticleMaskStream = 0x706d736b;
constexpr std::uint64_t kParticleEffectStream = 0x70656666;
constexpr std::uint64_t kParticleCountStream = 0x70636e74;

// Small engine for the per-(particle, gene) count draws; constructing an
// mt19937_64 for each of them would dominate the cost.
struct SplitMix {
  using result_type = std::uint64_t;
  std::uint64_t state;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state += 0x9e3779b97f4a7c15ULL;
    return mix_seed(state);
  }
};

Matrix dense(const model::Dense& layer, const Matrix& x) {
  return (x * layer.weight).rowwise() + RowVector(layer.bias.row(0));
}

void check_state(const model::ModelState& state) {
  if (!model::all_finite(state)) throw StateError("inference: model parameters are not finite");
  if (!(state.mean_library > 0.0)) throw StateError("inference: model buffers were never fitted");
}

}  // namespace

Generation generate_detailed(const model::ModelState& state, Index treatment, Index n_particles, std::uint64_t seed) {
  check_state(state);
  const Index t = state.config.n_causal, d = state.config.latent_dim, g = state.config.n_genes;
  if (treatment < kControl || treatment >= t)
    throw ValidationError("generate: treatment position " + std::to_string(treatment) + " out of range");
  if (n_particles < 1) throw ValidationError("generate: need at least one particle");

  Generation out;
  out.z_b.resize(n_particles, d);
  out.z_p = Matrix::Zero(n_particles, t);
  out.z_a = Matrix::Zero(n_particles, d);
  for (Index p = 0; p < n_particles; ++p) {
    const auto index = static_cast<std::uint64_t>(p);
    Rng basal = make_rng(seed, kParticleBasalStream, index);
    out.z_b.row(p) = standard_normal(1, d, basal);
    if (treatment == kControl) continue;
    // Only row `treatment` of M and E enters z_p = P (E * M), and each row of
    // E depends on the same row of M alone.
    Rng mask_rng = make_rng(seed, kParticleMaskStream, index);
    const Matrix noise = model::logistic_noise(1, t, mask_rng);
    const Matrix m = ((state.logits.row(treatment) + noise).array() > 0.0).cast<double>().matrix();
    const Matrix h = dense(state.effect_hidden, m).array().tanh().matrix();
    const Matrix mean = dense(state.effect_mean, h);
    const Matrix scale = dense(state.effect_scale, h).unaryExpr([](double x) { return softplus(x); });
    Rng effect_rng = make_rng(seed, kParticleEffectStream, index);
    const Matrix eps = standard_normal(1, t, effect_rng);
    out.z_p.row(p) = (mean.array() + scale.array() * eps.array()) * m.array();
  }

  const model::NbParams nb =
      model::decode_nb_params(state, out.z_b, out.z_p, out.z_a, Vector::Constant(n_particles, state.mean_library));
  out.rate = nb.rate;
  out.counts.resize(n_particles, g);
  for (Index p = 0; p < n_particles; ++p) {
    for (Index j = 0; j < g; ++j) {
      SplitMix rng{derive_seed(seed, kParticleCountStream, static_cast<std::uint64_t>(p * g + j))};
      const double theta = nb.dispersion(p, j);
      std::gamma_distribution<double> gamma(theta, nb.rate(p, j) / theta);
      const double lambda = gamma(rng);
      out.counts(p, j) = lambda > 0.0 ? static_cast<double>(std::poisson_distribution<long long>(lambda)(rng)) : 0.0;
    }
  }
  return out;
}

Matrix generate(const model::ModelState& state, Index treatment, Index n_particles, std::uint64_t seed) {
  return generate_detailed(state, treatment, n_particles, seed).counts;
}

AtePrediction estimate_ate(const model::ModelState& state, const std::string& treatment, Index n_particles,
                           std::uint64_t seed) {
  Index pos = kControl;
  if (treatment != "control") {
    const auto it = std::find(state.causal_names.begin(), state.causal_names.end(), treatment);
    if (it == state.causal_names.end()) throw ValidationError("estimate_ate: unknown treatment '" + treatment + "'");
    pos = static_cast<Index>(it - state.causal_names.begin());
  }
  const Matrix treated = generate(state, pos, n_particles, seed).array().log1p().matrix();
  const Matrix control = generate(state, kControl, n_particles, seed).array().log1p().matrix();
  const Matrix diff = treated - control;
  AtePrediction a;
  a.treatment = treatment;
  a.particles = n_particles;
  a.ate = diff.colwise().mean().transpose();
  if (n_particles > 1) {
    const Matrix centred = diff.rowwise() - a.ate.transpose();
    const double n = static_cast<double>(n_particles);
    a.std_error = (centred.colwise().squaredNorm().array() / (n - 1.0) / n).sqrt().transpose();
  } else {
    a.std_error = Vector::Constant(diff.cols(), std::numeric_limits<double>::infinity());
  }
  return a;
}

Vector observed_ate(const dataio::PerturbDataset& data, Index treatment) {
  const auto treated = data.rows_with_treatment(treatment);
  const auto controls = data.rows_with_treatment(kControl);
  if (treated.empty()) throw EvaluationError("observed_ate: no rows for the treatment");
  if (controls.empty()) throw EvaluationError("observed_ate: no control rows");
  auto mean_log1p = [&](const std::vector<Index>& rows) {
    Vector acc = Vector::Zero(data.counts.cols());
    for (Index r : rows) acc += data.counts.row(r).array().log1p().matrix().transpose();
    return Vector(acc / static_cast<double>(rows.size()));
  };
  return mean_log1p(treated) - mean_log1p(controls);
}

UnseenPrediction predict_unseen(const model::ModelState& state, const std::string& gene,
                                const dataio::PerturbDataset& test, Index n_particles, std::uint64_t seed) {
  const auto pos = test.catalog.causal_position(gene);
  if (!pos) throw EvaluationError("predict_unseen: '" + gene + "' is not a causal gene of the test split");
  UnseenPrediction u;
  u.observed_rows = static_cast<Index>(test.rows_with_treatment(*pos).size());
  if (u.observed_rows == 0) throw EvaluationError("predict_unseen: test split has no rows perturbing '" + gene + "'");
  u.prediction = estimate_ate(state, gene, n_particles, seed);
  u.observed = observed_ate(test, *pos);
  return u;
}

void export_predictions(const std::vector<UnseenPrediction>& predictions, const std::vector<std::string>& genes,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "treatment\tgene\tpredicted_de\tobserved_de\n";
  char buf[96];
  for (const auto& u : predictions) {
    if (u.prediction.ate.size() != static_cast<Index>(genes.size()) || u.observed.size() != u.prediction.ate.size())
      throw ShapeError("export_predictions: vector lengths do not match the gene list");
    for (std::size_t j = 0; j < genes.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g\t%.9g", u.prediction.ate(static_cast<Index>(j)),
                    u.observed(static_cast<Index>(j)));
      out << u.prediction.treatment << '\t' << genes[j] << '\t' << buf << '\n';
    }
  }
  if (!out) throw Error("write failed for " + path.string());
}

nlohmann::json to_json(const AtePrediction& p, const std::vector<std::string>& genes) {
  nlohmann::json ate = nlohmann::json::object(), se = nlohmann::json::object();
  for (std::size_t j = 0; j < genes.size(); ++j) {
    ate[genes[j]] = p.ate(static_cast<Index>(j));
    se[genes[j]] = p.std_error(static_cast<Index>(j));
  }
  return {{"treatment", p.treatment}, {"particles", p.particles}, {"ate", ate}, {"std_error", se}};
}

}  // namespace gpo::inference
