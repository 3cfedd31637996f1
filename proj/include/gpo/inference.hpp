#pragma once

// Artifact-free generation from a trained model, Monte-Carlo average
// treatment effects, and prediction for perturbations held out of training.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpo/common.hpp"
#include "gpo/dataio.hpp"
#include "gpo/model.hpp"

namespace gpo::inference {

inline constexpr Index kDefaultParticles = 2500;
inline constexpr Index kControl = -1;

/// One batch of generated particles with the latents that produced them.
struct Generation {
  Matrix z_b;     // n x d, standard normal
  Matrix z_p;     // n x T, zero rows for controls
  Matrix z_a;     // n x d, always zero
  Matrix rate;    // n x |G|, NB means
  Matrix counts;  // n x |G|, Gamma then Poisson draws
};

/// `treatment` is a causal position or kControl. Particle p draws every
/// random quantity from streams keyed by (seed, p) only, so two treatments
/// generated with the same seed share their basal and count noise.
Generation generate_detailed(const model::ModelState& state, Index treatment, Index n_particles, std::uint64_t seed);
Matrix generate(const model::ModelState& state, Index treatment, Index n_particles, std::uint64_t seed);

struct AtePrediction {
  std::string treatment;
  Vector ate;        // |G|, mean log1p(treated) - mean log1p(control)
  Vector std_error;  // |G|, of the paired per-particle differences
  Index particles = 0;
};

/// `treatment` is a causal gene name, or "control".
AtePrediction estimate_ate(const model::ModelState& state, const std::string& treatment,
                           Index n_particles = kDefaultParticles, std::uint64_t seed = 0);

/// Mean log1p counts of the treated rows minus mean log1p counts of the
/// control rows, per gene.
Vector observed_ate(const dataio::PerturbDataset& data, Index treatment);

struct UnseenPrediction {
  AtePrediction prediction;
  Vector observed;
  Index observed_rows = 0;
};

UnseenPrediction predict_unseen(const model::ModelState& state, const std::string& gene,
                                const dataio::PerturbDataset& test, Index n_particles = kDefaultParticles,
                                std::uint64_t seed = 0);

/// TSV rows: treatment, gene, predicted_de, observed_de.
void export_predictions(const std::vector<UnseenPrediction>& predictions, const std::vector<std::string>& genes,
                        const std::filesystem::path& path);
nlohmann::json to_json(const AtePrediction& p, const std::vector<std::string>& genes);

}  // namespace gpo::inference
