#pragma once

// Mini-batch stochastic variational training with Adam, global-norm
// clipping, mask-temperature annealing and best-validation tracking.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gpo/common.hpp"
#include "gpo/dataio.hpp"
#include "gpo/model.hpp"
#include "gpo/objective.hpp"

namespace gpo::trainer {

struct TrainConfig {
  int epochs = 1000;
  Index batch_size = 512;
  double learning_rate = 3e-4;
  double graph_learning_rate = 0.1;  // step size for the causal logits
  double clip_norm = 100.0;
  Index latent_dim = 8;
  Index encoder_hidden = 32;
  Index encoder_layers = 1;
  Index effect_hidden = 16;
  int k_hops = 5;
  double alpha = 1.0;
  double beta = 5.0;        // weight of the graph objective
  double kl_weight = 0.1;   // weight of the ELBO divergence terms
  double mask_prior = 0.3;
  double temperature_start = 1.0;
  double temperature_end = 0.1;
  double anneal_fraction = 0.5;
  std::uint64_t seed = 0;
  objective::Ablation ablation = objective::Ablation::full;
  // data split
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  std::vector<std::string> holdout;

  void validate() const;
  objective::LossWeights weights() const;
  model::ModelConfig model_config(const dataio::GeneCatalog& catalog) const;
  /// Temperature used during `epoch` (0-based).
  double temperature(int epoch) const;
};

struct EpochRecord {
  int epoch = 0;
  objective::LossBreakdown train;  // mean over the epoch's steps
  double val_elbo = 0.0;           // per-cell ELBO on the validation split
  double temperature = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<objective::LossBreakdown> steps;
  int best_epoch = -1;  // -1 when no epoch completed
};

struct TrainResult {
  model::ModelState final_state;
  model::ModelState best_state;
  TrainHistory history;
};

/// Thrown when the loss or a gradient stops being finite.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, model::ModelState last, int epoch, long step)
      : Error(what), last_finite(std::move(last)), epoch(epoch), step(step) {}
  model::ModelState last_finite;
  int epoch;
  long step;
};

struct Adam {
  double learning_rate = 3e-4;
  double graph_learning_rate = 0.1;  // step size for the causal logits
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Matrix> m, v;

  void step(std::span<Matrix* const> params, std::span<const Matrix> grads);
};

/// Scales every gradient by max_norm / g when the global L2 norm g exceeds
/// max_norm. Returns g.
double clip_gradients(std::span<Matrix> grads, double max_norm);
double global_norm(std::span<const Matrix> grads);

/// Everything the loss needs about one split, computed once.
struct PreparedSplit {
  const dataio::PerturbDataset* data = nullptr;
  dataio::ReferenceDge dge;
  std::vector<Index> qc_reference;
};
PreparedSplit prepare_split(const dataio::PerturbDataset& data, bool with_pairing);

/// Batch-weighted per-cell ELBO with hard masks and a fixed noise seed.
double evaluate_elbo(const model::ModelState& state, const PreparedSplit& split, const TrainConfig& config,
                     std::uint64_t seed);

using EpochCallback = std::function<void(const EpochRecord&, const model::ModelState&)>;

TrainResult train(const dataio::DatasetSplits& splits, const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace gpo::trainer
