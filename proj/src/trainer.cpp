#include "gpo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace gpo::trainer {

namespace {

constexpr std::uint64_t kModelInitStream = 0x6d6f6465;
constexpr std::uint64_t kBatchOrderStream = 0x6f726465;
constexpr std::uint64_t kStepNoiseStream = 0x73746570;
constexpr std::uint64_t kValidationStream = 0x76616c69;

objective::LossBreakdown& operator+=(objective::LossBreakdown& a, const objective::LossBreakdown& b) {
  a.j_rec += b.j_rec;
  a.j_ade += b.j_ade;
  a.j_dge_k += b.j_dge_k;
  a.j_sp += b.j_sp;
  a.j_gpo += b.j_gpo;
  a.total += b.total;
  return a;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (!(graph_learning_rate > 0.0)) throw ConfigError("train: graph_learning_rate must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (latent_dim < 1 || encoder_hidden < 1 || encoder_layers < 0 || effect_hidden < 1)
    throw ConfigError("train: layer sizes must be positive");
  if (k_hops < 1) throw ConfigError("train: k_hops must be >= 1");
  if (alpha < 0.0 || beta < 0.0 || kl_weight < 0.0) throw ConfigError("train: loss weights must be >= 0");
  if (!(mask_prior > 0.0 && mask_prior < 1.0)) throw ConfigError("train: mask_prior must lie in (0,1)");
  if (!(temperature_start > 0.0 && temperature_end > 0.0)) throw ConfigError("train: temperatures must be positive");
  if (!(anneal_fraction > 0.0 && anneal_fraction <= 1.0)) throw ConfigError("train: anneal_fraction must lie in (0,1]");
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0))
    throw ConfigError("train: split fractions invalid");
}

objective::LossWeights TrainConfig::weights() const {
  objective::LossWeights w;
  w.alpha = alpha;
  w.beta = beta;
  w.kl_weight = kl_weight;
  w.k_hops = k_hops;
  w.mask_prior = mask_prior;
  w.ablation = ablation;
  return w;
}

model::ModelConfig TrainConfig::model_config(const dataio::GeneCatalog& catalog) const {
  model::ModelConfig m;
  m.n_genes = catalog.n_genes();
  m.n_causal = catalog.n_causal();
  m.n_perturbed = catalog.n_perturbed();
  m.latent_dim = latent_dim;
  m.encoder_hidden = encoder_hidden;
  m.encoder_layers = encoder_layers;
  m.effect_hidden = effect_hidden;
  m.mask_prior = mask_prior;
  return m;
}

double TrainConfig::temperature(int epoch) const {
  const double span = anneal_fraction * static_cast<double>(epochs);
  const double progress = span > 0.0 ? std::min(1.0, static_cast<double>(epoch) / span) : 1.0;
  return temperature_start + (temperature_end - temperature_start) * progress;
}

// ---- optimizer ---------------------------------------------------------------

void Adam::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient counts differ");
  if (m.empty()) {
    for (Matrix* p : params) {
      m.push_back(Matrix::Zero(p->rows(), p->cols()));
      v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m[k] = beta1 * m[k] + (1.0 - beta1) * grads[k];
    v[k] = beta2 * v[k] + (1.0 - beta2) * grads[k].cwiseAbs2();
    params[k]->array() -= learning_rate * (m[k].array() / c1) / ((v[k].array() / c2).sqrt() + eps);
  }
}

double global_norm(std::span<const Matrix> grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

double clip_gradients(std::span<Matrix> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_gradients: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

// ---- data preparation ----------------------------------------------------------

PreparedSplit prepare_split(const dataio::PerturbDataset& data, bool with_pairing) {
  PreparedSplit s;
  s.data = &data;
  if (with_pairing) {
    s.dge = dataio::compute_reference_dge(data, dataio::pair_by_treatment(data));
    s.qc_reference = dataio::pair_qc_references(data);
  } else {
    s.dge.delta = Matrix::Zero(data.n_cells(), data.catalog.n_causal());
    s.dge.excluded.assign(static_cast<std::size_t>(data.n_cells()), 1);
  }
  return s;
}

double evaluate_elbo(const model::ModelState& state, const PreparedSplit& split, const TrainConfig& config,
                     std::uint64_t seed) {
  const Index n = split.data->n_cells();
  if (n == 0) return 0.0;
  const objective::LossWeights w = config.weights();
  double acc = 0.0;
  for (Index start = 0, b = 0; start < n; start += config.batch_size, ++b) {
    const Index len = std::min(config.batch_size, n - start);
    std::vector<Index> rows(static_cast<std::size_t>(len));
    std::iota(rows.begin(), rows.end(), start);
    const objective::Batch batch = objective::make_batch(state, *split.data, rows, split.dge, {});
    const auto noise = model::draw_noise(state.config, len, derive_seed(seed, kValidationStream, b));
    diffcore::Tape tape;
    const auto vars = model::bind_constants(tape, state);
    const auto pass = objective::forward(vars, state, batch, noise, 1.0, model::MaskMode::hard);
    acc += objective::elbo(batch, pass, vars, noise, w.kl_weight, w.mask_prior).scalar() * static_cast<double>(len);
  }
  return acc / static_cast<double>(n);
}

// ---- training loop -------------------------------------------------------------

TrainResult train(const dataio::DatasetSplits& splits, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const dataio::PerturbDataset& train_data = splits.train;
  if (train_data.n_cells() == 0) throw ConfigError("train: training split is empty");

  model::ModelState state =
      model::init_model(config.model_config(train_data.catalog), derive_seed(config.seed, kModelInitStream));
  state.gene_names = train_data.catalog.names;
  state.causal_names = train_data.catalog.causal_names();
  model::fit_buffers(state, train_data);

  TrainResult result;
  result.best_state = state;
  if (config.epochs == 0) {
    result.final_state = std::move(state);
    return result;
  }

  const PreparedSplit train_split = prepare_split(train_data, true);
  const PreparedSplit val_split = prepare_split(splits.val, false);
  const objective::LossWeights weights = config.weights();

  // The causal logits come first in parameter order and get their own step size.
  auto params = model::parameters(state);
  std::vector<Matrix*> param_ptrs;
  for (auto& [name, m] : params) param_ptrs.push_back(m);
  Adam graph_adam, net_adam;
  graph_adam.learning_rate = config.graph_learning_rate;
  net_adam.learning_rate = config.learning_rate;

  const Index n = train_data.n_cells();
  std::vector<Index> order(static_cast<std::size_t>(n));
  double best_val = -std::numeric_limits<double>::infinity();
  long global_step = 0;
  model::ModelState last_finite = state;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double temperature = config.temperature(epoch);
    std::iota(order.begin(), order.end(), Index{0});
    Rng order_rng = make_rng(config.seed, kBatchOrderStream, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), order_rng);

    objective::LossBreakdown epoch_sum;
    int n_steps = 0;
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index len = std::min(config.batch_size, n - start);
      const std::span<const Index> rows(order.data() + start, static_cast<std::size_t>(len));
      const objective::Batch batch =
          objective::make_batch(state, train_data, rows, train_split.dge, train_split.qc_reference);
      const auto noise = model::draw_noise(state.config, len,
                                           derive_seed(config.seed, kStepNoiseStream, static_cast<std::uint64_t>(global_step)));
      diffcore::Tape tape;
      std::vector<diffcore::Var> vars_flat;
      const auto vars = model::bind_variables(tape, state, vars_flat);
      const auto loss = objective::batch_loss(tape, vars, state, batch, noise, temperature, model::MaskMode::relaxed,
                                              weights);
      const objective::LossBreakdown b = objective::breakdown(loss, weights);
      if (!std::isfinite(b.total))
        throw DivergenceError("train: loss became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(global_step),
                              last_finite, epoch, global_step);
      tape.backward(loss.total);
      std::vector<Matrix> grads;
      grads.reserve(vars_flat.size());
      for (const auto& v : vars_flat) grads.push_back(tape.grad(v));
      const double norm = clip_gradients(grads, config.clip_norm);
      if (!std::isfinite(norm))
        throw DivergenceError("train: gradient became non-finite at epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(global_step),
                              last_finite, epoch, global_step);
      graph_adam.step(std::span<Matrix* const>(param_ptrs).first(1), std::span<const Matrix>(grads).first(1));
      net_adam.step(std::span<Matrix* const>(param_ptrs).subspan(1), std::span<const Matrix>(grads).subspan(1));
      if (!model::all_finite(state))
        throw DivergenceError("train: parameters became non-finite at epoch " + std::to_string(epoch),
                              last_finite, epoch, global_step);
      result.history.steps.push_back(b);
      epoch_sum += b;
      ++n_steps;
      ++global_step;
    }
    last_finite = state;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.temperature = temperature;
    rec.train = epoch_sum;
    const double inv = 1.0 / static_cast<double>(n_steps);
    rec.train.j_rec *= inv;
    rec.train.j_ade *= inv;
    rec.train.j_dge_k *= inv;
    rec.train.j_sp *= inv;
    rec.train.j_gpo *= inv;
    rec.train.total *= inv;
    rec.train.alpha = weights.alpha;
    rec.train.beta = weights.beta;
    rec.train.k_hops = weights.ablation == objective::Ablation::dge_only ? 1 : weights.k_hops;
    rec.val_elbo = splits.val.n_cells() > 0 ? evaluate_elbo(state, val_split, config, config.seed) : rec.train.j_rec;
    if (rec.val_elbo > best_val) {
      best_val = rec.val_elbo;
      result.history.best_epoch = epoch;
      result.best_state = state;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec, state);
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace gpo::trainer
