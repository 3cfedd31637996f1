#include "gpo/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gpo/dataio.hpp"
#include "gpo/special.hpp"

namespace gpo::model {

namespace {

// Sub-stream identifiers for the noise of one forward pass.
constexpr std::uint64_t kMaskStream = 0x6d61736b;
constexpr std::uint64_t kEffectStream = 0x65666665;
constexpr std::uint64_t kArtifactStream = 0x61727466;
constexpr std::uint64_t kBasalStream = 0x62617361;
constexpr std::uint64_t kInitStream = 0x696e6974;

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

Dense make_dense(Index in, Index out, Rng& rng, double gain = 1.0) {
  Dense d;
  d.weight = standard_normal(in, out, rng) * (gain / std::sqrt(static_cast<double>(in)));
  d.bias = Matrix::Zero(1, out);
  return d;
}

Var apply(const DenseVar& layer, const Var& x) { return diffcore::add_row(diffcore::matmul(x, layer.weight), layer.bias); }

template <typename State, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(State& s) {
  std::vector<std::pair<std::string, Ptr>> out;
  auto dense = [&](const std::string& name, auto& layer) {
    out.emplace_back(name + ".weight", &layer.weight);
    out.emplace_back(name + ".bias", &layer.bias);
  };
  out.emplace_back("logits", &s.logits);
  dense("effect_hidden", s.effect_hidden);
  dense("effect_mean", s.effect_mean);
  dense("effect_scale", s.effect_scale);
  out.emplace_back("artifact_mu", &s.artifact_mu);
  out.emplace_back("artifact_log_sigma", &s.artifact_log_sigma);
  for (std::size_t l = 0; l < s.encoder.size(); ++l) dense("encoder." + std::to_string(l), s.encoder[l]);
  dense("encoder_mean", s.encoder_mean);
  dense("encoder_scale", s.encoder_scale);
  dense("decoder", s.decoder);
  out.emplace_back("log_theta", &s.log_theta);
  return out;
}

void check_shape(const Matrix& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                     ", got " + shape_str(m));
}

}  // namespace

void ModelConfig::validate() const {
  if (n_genes < 1 || n_causal < 1) throw ConfigError("model: gene counts must be positive");
  if (n_perturbed < 0 || n_perturbed > n_causal) throw ConfigError("model: perturbed count out of range");
  if (latent_dim < 1 || encoder_hidden < 1 || encoder_layers < 0 || effect_hidden < 1)
    throw ConfigError("model: layer sizes must be positive");
  if (!(mask_prior > 0.0 && mask_prior < 1.0)) throw ConfigError("model: mask prior must lie in (0,1)");
  if (!(init_effect_scale > 0.0)) throw ConfigError("model: initial effect scale must be positive");
}

Matrix ModelState::prob() const { return logits.unaryExpr([](double w) { return sigmoid(w); }); }

std::vector<std::pair<std::string, Matrix*>> parameters(ModelState& state) {
  return collect<ModelState, Matrix*>(state);
}

std::vector<std::pair<std::string, const Matrix*>> parameters(const ModelState& state) {
  return collect<const ModelState, const Matrix*>(state);
}

Index parameter_count(const ModelState& state) {
  Index n = 0;
  for (const auto& [name, m] : parameters(state)) n += m->size();
  return n;
}

bool all_finite(const ModelState& state) {
  for (const auto& [name, m] : parameters(state))
    if (!m->allFinite()) return false;
  return true;
}

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState s;
  s.config = config;
  const Index t = config.n_causal, g = config.n_genes, d = config.latent_dim;
  Rng rng = make_rng(seed, kInitStream);
  s.logits = Matrix::Constant(t, t, logit(config.mask_prior));
  s.effect_hidden = make_dense(t, config.effect_hidden, rng);
  s.effect_mean = make_dense(config.effect_hidden, t, rng);
  s.effect_scale = make_dense(config.effect_hidden, t, rng, 0.1);
  s.effect_scale.bias.setConstant(inverse_softplus(config.init_effect_scale));
  s.artifact_mu = Matrix::Zero(1, d);
  s.artifact_log_sigma = Matrix::Zero(1, d);
  Index in = g + t + d;
  for (Index l = 0; l < config.encoder_layers; ++l) {
    s.encoder.push_back(make_dense(in, config.encoder_hidden, rng));
    in = config.encoder_hidden;
  }
  s.encoder_mean = make_dense(in, d, rng);
  s.encoder_scale = make_dense(in, d, rng, 0.1);
  s.encoder_scale.bias.setConstant(inverse_softplus(1.0));
  s.decoder = make_dense(d + t + d, g, rng, 0.1);
  s.log_theta = Matrix::Zero(1, g);
  s.feature_mean = Matrix::Zero(1, g);
  s.feature_sd = Matrix::Ones(1, g);
  return s;
}

void fit_buffers(ModelState& state, const dataio::PerturbDataset& train) {
  const Index g = state.config.n_genes;
  check_shape(train.counts, train.n_cells(), g, "fit_buffers counts");
  if (train.n_cells() == 0) throw ValidationError("fit_buffers: empty training split");
  const Matrix logx = train.counts.array().log1p().matrix();
  const RowVector mean = logx.colwise().mean();
  RowVector sd = ((logx.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(logx.rows()))
                     .sqrt()
                     .matrix();
  for (Index j = 0; j < g; ++j)
    if (!(sd(j) > 1e-6)) sd(j) = 1.0;
  state.feature_mean = mean;
  state.feature_sd = sd;
  state.mean_library = train.library_size.mean();
  const RowVector totals = train.counts.colwise().sum();
  state.decoder.bias = (totals.array() + 1.0).log().matrix();
}

// ---- bindings ----------------------------------------------------------------

ModelVars unpack(const ModelState& state, std::span<const Var> vars) {
  const std::size_t expected = parameters(state).size();
  if (vars.size() != expected)
    throw ShapeError("unpack: expected " + std::to_string(expected) + " vars, got " + std::to_string(vars.size()));
  std::size_t k = 0;
  auto next = [&] { return vars[k++]; };
  auto dense = [&] {
    DenseVar d;
    d.weight = next();
    d.bias = next();
    return d;
  };
  ModelVars v;
  v.logits = next();
  v.effect_hidden = dense();
  v.effect_mean = dense();
  v.effect_scale = dense();
  v.artifact_mu = next();
  v.artifact_log_sigma = next();
  for (std::size_t l = 0; l < state.encoder.size(); ++l) v.encoder.push_back(dense());
  v.encoder_mean = dense();
  v.encoder_scale = dense();
  v.decoder = dense();
  v.log_theta = next();
  return v;
}

ModelVars bind_constants(Tape& tape, const ModelState& state) {
  std::vector<Var> vars;
  for (const auto& [name, m] : parameters(state)) vars.push_back(tape.constant(*m));
  return unpack(state, vars);
}

ModelVars bind_variables(Tape& tape, const ModelState& state, std::vector<Var>& out) {
  out.clear();
  for (const auto& [name, m] : parameters(state)) out.push_back(tape.variable(*m));
  return unpack(state, out);
}

// ---- forward pieces ----------------------------------------------------------

Matrix logistic_noise(Index rows, Index cols, Rng& rng) {
  return open_uniform(rows, cols, rng).unaryExpr([](double u) { return std::log(u) - std::log1p(-u); });
}

Var mask_from_noise(const Var& logits, const Matrix& noise, double temperature, MaskMode mode) {
  check_shape(noise, logits.rows(), logits.cols(), "mask noise");
  Tape& tape = *logits.tape();
  if (mode == MaskMode::hard) {
    const Matrix m = ((logits.value() + noise).array() > 0.0).cast<double>().matrix();
    return tape.constant(m);
  }
  if (!(temperature > 0.0)) throw std::invalid_argument("sample_mask: temperature must be positive in relaxed mode");
  return diffcore::sigmoid((logits + tape.constant(noise)) * (1.0 / temperature));
}

GaussianVar effect_posterior(const ModelVars& vars, const Var& mask) {
  if (mask.rows() != mask.cols() || mask.cols() != vars.effect_hidden.weight.rows())
    throw ShapeError("effects: mask " + shape_str(mask.value()) + " does not match the effect network");
  const Var h = diffcore::tanh(apply(vars.effect_hidden, mask));
  return {apply(vars.effect_mean, h), diffcore::softplus(apply(vars.effect_scale, h))};
}

Var reparameterize(const GaussianVar& q, const Matrix& eps) {
  check_shape(eps, q.mean.rows(), q.mean.cols(), "reparameterization noise");
  return q.mean + diffcore::hadamard(q.scale, q.mean.tape()->constant(eps));
}

Var encode_perturbation(const Var& treatments, const Var& effects, const Var& mask) {
  if (treatments.cols() != effects.rows() || effects.rows() != effects.cols() || mask.rows() != effects.rows() ||
      mask.cols() != effects.cols())
    throw ShapeError("encode_perturbation: P " + shape_str(treatments.value()) + ", E " + shape_str(effects.value()) +
                     ", M " + shape_str(mask.value()));
  return diffcore::matmul(treatments, diffcore::hadamard(effects, mask));
}

Matrix basal_features(const ModelState& state, const Matrix& counts) {
  check_shape(counts, counts.rows(), state.config.n_genes, "basal features");
  Matrix f = counts.array().log1p().matrix();
  f.rowwise() -= RowVector(state.feature_mean);
  return (f.array().rowwise() / state.feature_sd.row(0).array()).matrix();
}

GaussianVar encode_basal(const ModelVars& vars, const Var& features, const Var& z_p, const Var& z_a) {
  if (features.rows() != z_p.rows() || features.rows() != z_a.rows())
    throw ShapeError("encode_basal: row counts differ");
  Var h = diffcore::concat_cols({features, z_p, z_a});
  for (const auto& layer : vars.encoder) h = diffcore::tanh(apply(layer, h));
  return {apply(vars.encoder_mean, h), diffcore::softplus(apply(vars.encoder_scale, h))};
}

Var decode_log_rate(const ModelVars& vars, const Var& z_b, const Var& z_p, const Var& z_a,
                    const Matrix& log_library) {
  if (z_b.rows() != z_p.rows() || z_b.rows() != z_a.rows() || log_library.rows() != z_b.rows() ||
      log_library.cols() != 1)
    throw ShapeError("decode: row counts differ");
  const Var log_frac = diffcore::log_softmax_rows(apply(vars.decoder, diffcore::concat_cols({z_b, z_p, z_a})));
  const Matrix shift = log_library.replicate(1, log_frac.cols());
  return log_frac + z_b.tape()->constant(shift);
}

Var nb_log_likelihood(const Matrix& counts, const Var& log_rate, const Var& log_theta) {
  using namespace diffcore;
  const Index n = counts.rows();
  check_shape(counts, log_rate.rows(), log_rate.cols(), "nb counts");
  check_shape(log_theta.value(), 1, counts.cols(), "nb log dispersion");
  Tape& tape = *log_rate.tape();
  const Var x = tape.constant(counts);
  const Var theta_row = exp(log_theta);
  const Var theta = broadcast_rows(theta_row, n);
  const Var r = log_rate - broadcast_rows(log_theta, n);
  const Var sp = softplus(r);
  const Var body = lgamma(add_row(x, theta_row)) - hadamard(theta, sp) + hadamard(x, r - sp);
  const Matrix lgx1 = counts.unaryExpr([](double v) { return log_gamma(v + 1.0); }).rowwise().sum();
  return row_sum(body) - broadcast_rows(sum(lgamma(theta_row)), n) - tape.constant(lgx1);
}

StepNoise draw_noise(const ModelConfig& config, Index rows, std::uint64_t seed) {
  StepNoise s;
  const Index t = config.n_causal, d = config.latent_dim;
  Rng mask_rng = make_rng(seed, kMaskStream);
  s.mask = logistic_noise(t, t, mask_rng);
  Rng effect_rng = make_rng(seed, kEffectStream);
  s.effect_eps = standard_normal(t, t, effect_rng);
  Rng artifact_rng = make_rng(seed, kArtifactStream);
  s.artifact_eps = standard_normal(1, d, artifact_rng);
  Rng basal_rng = make_rng(seed, kBasalStream);
  s.basal_eps = standard_normal(rows, d, basal_rng);
  return s;
}

// ---- plain operations --------------------------------------------------------

Matrix sample_mask(const ModelState& state, double temperature, MaskMode mode, std::uint64_t seed) {
  Tape tape;
  const Matrix noise = draw_noise(state.config, 0, seed).mask;
  return mask_from_noise(tape.constant(state.logits), noise, temperature, mode).value();
}

Matrix sample_effects(const ModelState& state, const Matrix& mask, std::uint64_t seed) {
  Tape tape;
  const ModelVars v = bind_constants(tape, state);
  const GaussianVar q = effect_posterior(v, tape.constant(mask));
  return reparameterize(q, draw_noise(state.config, 0, seed).effect_eps).value();
}

Matrix encode_perturbation(const Matrix& treatments, const Matrix& effects, const Matrix& mask) {
  Tape tape;
  return encode_perturbation(tape.constant(treatments), tape.constant(effects), tape.constant(mask)).value();
}

ArtifactSample encode_artifact(const ModelState& state, const Vector& qc, std::uint64_t seed) {
  for (Index n = 0; n < qc.size(); ++n)
    if (qc(n) != 0.0 && qc(n) != 1.0) throw ValidationError("encode_artifact: A must be binary");
  const Matrix eps = draw_noise(state.config, 0, seed).artifact_eps;
  ArtifactSample s;
  s.u = state.artifact_mu.array() + state.artifact_log_sigma.array().exp() * eps.array();
  s.z_a = qc * s.u;
  s.z_a_cf = (Vector::Ones(qc.size()) - qc) * s.u;
  return s;
}

BasalSample encode_basal(const ModelState& state, const Matrix& counts, const Matrix& z_p, const Matrix& z_a,
                         std::uint64_t seed) {
  Tape tape;
  const ModelVars v = bind_constants(tape, state);
  const GaussianVar q =
      encode_basal(v, tape.constant(basal_features(state, counts)), tape.constant(z_p), tape.constant(z_a));
  BasalSample s;
  s.mean = q.mean.value();
  s.scale = q.scale.value();
  s.z_b = reparameterize(q, draw_noise(state.config, counts.rows(), seed).basal_eps).value();
  return s;
}

NbParams decode_nb_params(const ModelState& state, const Matrix& z_b, const Matrix& z_p, const Matrix& z_a,
                          const Vector& library_size) {
  if (!(library_size.array() > 0.0).all()) throw ValidationError("decode: library sizes must be positive");
  Tape tape;
  const ModelVars v = bind_constants(tape, state);
  const Var log_rate = decode_log_rate(v, tape.constant(z_b), tape.constant(z_p), tape.constant(z_a),
                                       library_size.array().log().matrix());
  NbParams p;
  p.rate = log_rate.value().array().exp().matrix();
  p.dispersion = state.log_theta.array().exp().matrix().replicate(z_b.rows(), 1);
  return p;
}

double nb_log_mass(double x, double rate, double dispersion) {
  // theta log(theta/(theta+mu)) and x log(mu/(theta+mu)) via log1p for large theta.
  const double ratio = rate / dispersion;
  const double l1p = std::log1p(ratio);
  return log_gamma(x + dispersion) - log_gamma(dispersion) - log_gamma(x + 1.0) - dispersion * l1p +
         x * (std::log(ratio) - l1p);
}

Vector nb_log_likelihood(const Matrix& counts, const Matrix& rate, const Matrix& dispersion) {
  check_shape(rate, counts.rows(), counts.cols(), "nb rate");
  check_shape(dispersion, counts.rows(), counts.cols(), "nb dispersion");
  Vector out = Vector::Zero(counts.rows());
  for (Index j = 0; j < counts.cols(); ++j)
    for (Index i = 0; i < counts.rows(); ++i) {
      const double x = counts(i, j), mu = rate(i, j), th = dispersion(i, j);
      if (!(mu > 0.0) || !(th > 0.0) || !(x >= 0.0) || x != std::floor(x))
        throw ValidationError("nb_log_likelihood: domain violation at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      out(i) += nb_log_mass(x, mu, th);
    }
  return out;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Index k = 0; k < m.size(); ++k) data.push_back(m(k));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j, const std::string& name) {
  try {
    const Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
    const auto& data = j.at("data");
    if (static_cast<Index>(data.size()) != rows * cols) throw CheckpointError("checkpoint: size mismatch for " + name);
    Matrix m(rows, cols);
    for (Index k = 0; k < m.size(); ++k) m(k) = data[static_cast<std::size_t>(k)].get<double>();
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint: malformed matrix '" + name + "': " + e.what());
  }
}

json config_to_json(const ModelConfig& c) {
  return {{"n_genes", c.n_genes},         {"n_causal", c.n_causal},
          {"n_perturbed", c.n_perturbed}, {"latent_dim", c.latent_dim},
          {"encoder_hidden", c.encoder_hidden}, {"encoder_layers", c.encoder_layers},
          {"effect_hidden", c.effect_hidden},   {"mask_prior", c.mask_prior},
          {"init_effect_scale", c.init_effect_scale}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.n_genes = j.at("n_genes").get<Index>();
  c.n_causal = j.at("n_causal").get<Index>();
  c.n_perturbed = j.at("n_perturbed").get<Index>();
  c.latent_dim = j.at("latent_dim").get<Index>();
  c.encoder_hidden = j.at("encoder_hidden").get<Index>();
  c.encoder_layers = j.at("encoder_layers").get<Index>();
  c.effect_hidden = j.at("effect_hidden").get<Index>();
  c.mask_prior = j.at("mask_prior").get<double>();
  c.init_effect_scale = j.at("init_effect_scale").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state, const std::string& config_hash) {
  if (!all_finite(state)) throw CheckpointError("checkpoint: refusing to save non-finite parameters");
  json params = json::object();
  for (const auto& [name, m] : parameters(state)) params[name] = matrix_to_json(*m);
  json buffers = {{"feature_mean", matrix_to_json(state.feature_mean)},
                  {"feature_sd", matrix_to_json(state.feature_sd)},
                  {"mean_library", state.mean_library}};
  json doc = {{"format", "gpovae-checkpoint"},
              {"version", kCheckpointVersion},
              {"config_hash", config_hash},
              {"model_config", config_to_json(state.config)},
              {"gene_names", state.gene_names},
              {"causal_names", state.causal_names},
              {"parameters", std::move(params)},
              {"buffers", std::move(buffers)}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path, const std::string& expected_hash,
                           std::string* stored_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint: corrupt file " + path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != "gpovae-checkpoint")
      throw CheckpointError("checkpoint: unrecognized format in " + path.string());
    const int version = doc.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw CheckpointError("checkpoint: version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    const std::string hash = doc.at("config_hash").get<std::string>();
    if (stored_hash) *stored_hash = hash;
    if (!expected_hash.empty() && hash != expected_hash)
      throw CheckpointError("checkpoint: config hash mismatch (file " + hash + ", expected " + expected_hash + ")");
    ModelState s = init_model(config_from_json(doc.at("model_config")), 0);
    s.gene_names = doc.at("gene_names").get<std::vector<std::string>>();
    s.causal_names = doc.at("causal_names").get<std::vector<std::string>>();
    const json& params = doc.at("parameters");
    for (auto& [name, m] : parameters(s)) {
      Matrix loaded = matrix_from_json(params.at(name), name);
      check_shape(loaded, m->rows(), m->cols(), name.c_str());
      *m = std::move(loaded);
    }
    const json& buffers = doc.at("buffers");
    s.feature_mean = matrix_from_json(buffers.at("feature_mean"), "feature_mean");
    s.feature_sd = matrix_from_json(buffers.at("feature_sd"), "feature_sd");
    s.mean_library = buffers.at("mean_library").get<double>();
    return s;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint: missing or malformed field in " + path.string() + ": " + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace gpo::model
