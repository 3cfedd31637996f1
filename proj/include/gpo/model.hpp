#pragma once

// Generative model: relaxed Bernoulli masks over the causal matrix, a row-wise
// effect network, a global artifact embedding, the basal-state encoder and a
// negative-binomial decoder. Every stochastic piece takes its noise from an
// explicit seed so forward passes are pure functions.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpo/common.hpp"
#include "gpo/diffcore.hpp"

namespace gpo::dataio {
struct PerturbDataset;
}

namespace gpo::model {

using diffcore::Tape;
using diffcore::Var;

struct ModelConfig {
  Index n_genes = 0;      // |G|
  Index n_causal = 0;     // |G°∪G+|
  Index n_perturbed = 0;  // |G°|
  Index latent_dim = 8;   // d for Z_b and u
  Index encoder_hidden = 32;
  Index encoder_layers = 1;
  Index effect_hidden = 16;
  double mask_prior = 0.3;
  double init_effect_scale = 0.1;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Affine layer x * weight + bias (bias is 1 x out).
struct Dense {
  Matrix weight;
  Matrix bias;
};

struct ModelState {
  ModelConfig config;
  std::vector<std::string> gene_names;
  std::vector<std::string> causal_names;

  Matrix logits;  // T x T, prob = sigmoid(logits)
  Dense effect_hidden, effect_mean, effect_scale;
  Matrix artifact_mu, artifact_log_sigma;  // 1 x d
  std::vector<Dense> encoder;
  Dense encoder_mean, encoder_scale;
  Dense decoder;
  Matrix log_theta;  // 1 x G

  // Buffers fitted on the training split, not optimized.
  Matrix feature_mean, feature_sd;  // 1 x G, of log1p counts
  double mean_library = 1.0;

  Matrix prob() const;
};

/// Trainable parameters in a fixed order shared by optimizer, checkpoints and unpack().
std::vector<std::pair<std::string, Matrix*>> parameters(ModelState& state);
std::vector<std::pair<std::string, const Matrix*>> parameters(const ModelState& state);
Index parameter_count(const ModelState& state);
bool all_finite(const ModelState& state);

ModelState init_model(const ModelConfig& config, std::uint64_t seed);
/// Feature standardization, mean library size and decoder bias from the training split.
void fit_buffers(ModelState& state, const dataio::PerturbDataset& train);

// ---- tape bindings -----------------------------------------------------------

struct DenseVar {
  Var weight, bias;
};

struct ModelVars {
  Var logits;
  DenseVar effect_hidden, effect_mean, effect_scale;
  Var artifact_mu, artifact_log_sigma;
  std::vector<DenseVar> encoder;
  DenseVar encoder_mean, encoder_scale;
  DenseVar decoder;
  Var log_theta;
};

/// Vars in parameters() order -> structured handles.
ModelVars unpack(const ModelState& state, std::span<const Var> vars);
ModelVars bind_constants(Tape& tape, const ModelState& state);
/// Trainable Vars; `out` receives them in parameters() order.
ModelVars bind_variables(Tape& tape, const ModelState& state, std::vector<Var>& out);

struct GaussianVar {
  Var mean;
  Var scale;
};

enum class MaskMode { relaxed, hard };

/// Logistic noise log(u) - log(1-u), u uniform on (0,1).
Matrix logistic_noise(Index rows, Index cols, Rng& rng);

/// Relaxed: sigmoid((logits + noise) / temperature). Hard: 1[logits + noise > 0].
Var mask_from_noise(const Var& logits, const Matrix& noise, double temperature, MaskMode mode);
GaussianVar effect_posterior(const ModelVars& vars, const Var& mask);
Var reparameterize(const GaussianVar& q, const Matrix& eps);
Var encode_perturbation(const Var& treatments, const Var& effects, const Var& mask);
/// Standardized log1p counts.
Matrix basal_features(const ModelState& state, const Matrix& counts);
GaussianVar encode_basal(const ModelVars& vars, const Var& features, const Var& z_p, const Var& z_a);
/// log rate (N x |G|) = log_softmax(decoder([Z_b | Z_p | Z_a])) + log L.
Var decode_log_rate(const ModelVars& vars, const Var& z_b, const Var& z_p, const Var& z_a,
                    const Matrix& log_library);
/// Per-row negative-binomial log-mass summed over genes, N x 1.
Var nb_log_likelihood(const Matrix& counts, const Var& log_rate, const Var& log_theta);

/// All noise consumed by one forward pass over `rows` samples. The plain
/// operations below draw from the same streams, so a seed means the same
/// thing everywhere.
struct StepNoise {
  Matrix mask;          // T x T logistic
  Matrix effect_eps;    // T x T
  Matrix artifact_eps;  // 1 x d
  Matrix basal_eps;     // rows x d
};
StepNoise draw_noise(const ModelConfig& config, Index rows, std::uint64_t seed);

// ---- plain operations --------------------------------------------------------

Matrix sample_mask(const ModelState& state, double temperature, MaskMode mode, std::uint64_t seed);
/// E = mean(M) + scale(M) * eps.
Matrix sample_effects(const ModelState& state, const Matrix& mask, std::uint64_t seed);
Matrix encode_perturbation(const Matrix& treatments, const Matrix& effects, const Matrix& mask);

struct ArtifactSample {
  Matrix z_a, z_a_cf;
  Matrix u;  // 1 x d
};
ArtifactSample encode_artifact(const ModelState& state, const Vector& qc, std::uint64_t seed);

struct BasalSample {
  Matrix mean, scale, z_b;
};
BasalSample encode_basal(const ModelState& state, const Matrix& counts, const Matrix& z_p,
                         const Matrix& z_a, std::uint64_t seed);

struct NbParams {
  Matrix rate;        // N x |G|
  Matrix dispersion;  // N x |G|
};
NbParams decode_nb_params(const ModelState& state, const Matrix& z_b, const Matrix& z_p,
                          const Matrix& z_a, const Vector& library_size);

/// Per-row negative-binomial log-mass: rate is the mean, dispersion the Gamma shape.
Vector nb_log_likelihood(const Matrix& counts, const Matrix& rate, const Matrix& dispersion);
double nb_log_mass(double x, double rate, double dispersion);

// ---- checkpoints -------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const std::string& config_hash);
/// Throws CheckpointError on version or (non-empty) expected hash mismatch.
ModelState load_checkpoint(const std::filesystem::path& path, const std::string& expected_hash = "",
                           std::string* stored_hash = nullptr);

}  // namespace gpo::model
