#pragma once

// Perturbation datasets: gene catalog, count/treatment/QC matrices, TSV
// ingestion, a synthetic generator with a known regulatory graph, optimal
// transport pairing of perturbed cells with controls, and the reference
// differential-expression profiles built from those pairs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpo/common.hpp"

namespace gpo::dataio {

enum class GeneRole { perturbed, extended, measured };

std::string to_string(GeneRole role);
GeneRole parse_role(const std::string& text);

/// Ordered gene identifiers with the perturbed (G°) and extended (G+) subsets.
/// The "causal" genes G°∪G+ are ordered perturbed-first, each part in catalog
/// order; that order indexes the columns of P, ΔX and the causal matrices.
struct GeneCatalog {
  std::vector<std::string> names;
  std::vector<Index> perturbed_idx;
  std::vector<Index> extended_idx;

  Index n_genes() const { return static_cast<Index>(names.size()); }
  Index n_perturbed() const { return static_cast<Index>(perturbed_idx.size()); }
  Index n_causal() const { return static_cast<Index>(perturbed_idx.size() + extended_idx.size()); }

  /// Catalog index of each causal gene, in causal order.
  std::vector<Index> causal_idx() const;
  std::vector<std::string> causal_names() const;
  std::optional<Index> find(const std::string& name) const;
  /// Position of `name` within the causal order, if it is in G°∪G+.
  std::optional<Index> causal_position(const std::string& name) const;
  bool is_perturbed_causal(Index causal_pos) const { return causal_pos < n_perturbed(); }
  GeneRole role(Index gene) const;

  /// Throws ValidationError when names repeat, indices are out of range, or G°∩G+ ≠ ∅.
  void validate() const;

  friend bool operator==(const GeneCatalog&, const GeneCatalog&) = default;
};

/// D = (X, P, A) plus library sizes. Counts are stored as integral doubles.
struct PerturbDataset {
  Matrix counts;       // N x |G|
  Matrix treatments;   // N x |G°∪G+|, one-hot or all-zero rows
  Vector qc;           // N, 1 = artifact present / QC failed
  Vector library_size; // N, row sums of counts
  GeneCatalog catalog;

  Index n_cells() const { return counts.rows(); }

  /// Causal position of each row's treatment; -1 for controls.
  std::vector<Index> treatment_index() const;
  /// Rows whose treatment is causal position `pos` (or controls when pos == -1).
  std::vector<Index> rows_with_treatment(Index pos) const;

  PerturbDataset subset(std::span<const Index> rows) const;

  /// Checks every structural invariant; throws ValidationError.
  void validate() const;

  /// Shape-checked exact equality of every member.
  friend bool operator==(const PerturbDataset& a, const PerturbDataset& b);
};

/// Signed weighted adjacency over the causal genes (row = source).
struct GroundTruthGrn {
  Matrix adjacency;
  std::vector<std::pair<Index, Index>> edge_set() const;
  bool is_acyclic() const;
};

struct DatasetPaths {
  std::filesystem::path expression;
  std::filesystem::path treatments;
  std::filesystem::path qc;
  std::filesystem::path catalog;

  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

PerturbDataset load_dataset(const DatasetPaths& paths);
void save_dataset(const PerturbDataset& data, const DatasetPaths& paths);

void save_ground_truth(const GroundTruthGrn& grn, const GeneCatalog& catalog,
                       const std::filesystem::path& path);
GroundTruthGrn load_ground_truth(const std::filesystem::path& path, const GeneCatalog& catalog);

// ---- synthesis ---------------------------------------------------------------

struct SynthConfig {
  Index n_perturbed = 10;
  Index n_extended = 5;
  Index n_measured = 5;
  Index n_cells = 1000;
  double edge_density = 0.1;
  /// Natural-log reduction applied to the perturbed gene.
  double knockdown_strength = 1.5;
  double artifact_rate = 0.1;
  /// Gamma-Poisson inverse dispersion (larger = closer to Poisson).
  double dispersion = 10.0;
  double control_fraction = 0.2;
  double min_edge_weight = 0.5;
  double max_edge_weight = 1.0;
  double negative_edge_fraction = 0.3;
  double min_base_mean = 5.0;
  double max_base_mean = 60.0;
  double library_log_sd = 0.2;
  double artifact_log_sd = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

std::pair<PerturbDataset, GroundTruthGrn> synthesize_dataset(const SynthConfig& config);

// ---- pairing -----------------------------------------------------------------

struct PairingPlan {
  /// (perturbed row, control row); indices refer to the caller's row sets.
  std::vector<std::pair<Index, Index>> pairs;
  std::vector<Index> unmatched_controls;
  std::vector<Index> unmatched_perturbed;
  double total_cost = 0.0;
};

/// Minimum-cost assignment of each row of `cost` to a distinct column.
/// Requires rows <= cols. Returns the column chosen for each row.
std::vector<Index> solve_assignment(const Matrix& cost);

/// log1p of counts rescaled to a common library size of 1e4.
Matrix log1p_normalize(const Matrix& counts);

/// Squared-Euclidean cost between log1p-normalized rows.
Matrix pairing_cost(const Matrix& perturbed_counts, const Matrix& control_counts);

/// Exact OT pairing; throws PairingError if either side is empty.
PairingPlan pair_optimal_transport(const Matrix& perturbed_counts, const Matrix& control_counts);

/// Pairs each treatment group separately against all controls of `data`;
/// indices in the returned plan are dataset rows.
PairingPlan pair_by_treatment(const PerturbDataset& data);

/// For each row with qc == 1, an OT-paired qc == 0 row of the same treatment;
/// -1 when the row is QC-pass or no partner exists.
std::vector<Index> pair_qc_references(const PerturbDataset& data);

// ---- reference differential expression ---------------------------------------

struct ReferenceDge {
  Matrix delta;               // N x |G°∪G+|, entries in [0,1]
  std::vector<char> excluded; // 1 = zero vector by the control / unpaired rule
  Index n_included() const;
};

ReferenceDge compute_reference_dge(const PerturbDataset& data, const PairingPlan& plan);

// ---- splits ------------------------------------------------------------------

struct DatasetSplits {
  std::vector<Index> train_rows, val_rows, test_rows;
  PerturbDataset train, val, test;
};

DatasetSplits split_dataset(const PerturbDataset& data, std::uint64_t seed,
                            const std::vector<std::string>& holdout_perturbations,
                            double train_fraction = 0.8, double val_fraction = 0.1);

}  // namespace gpo::dataio
