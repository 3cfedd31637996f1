#include <algorithm>
#include <cmath>
#include <limits>

#include "gpo/dataio.hpp"

namespace gpo::dataio {

std::vector<Index> solve_assignment(const Matrix& cost) {
  // Shortest augmenting path with dual potentials (Hungarian method), O(n^2 m).
  const Index n = cost.rows(), m = cost.cols();
  if (n > m) throw PairingError("solve_assignment: more rows than columns");
  if (!cost.allFinite()) throw PairingError("solve_assignment: non-finite cost");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<Index> match(m + 1, 0), way(m + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = match[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const Index j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> assignment(n, -1);
  for (Index j = 1; j <= m; ++j)
    if (match[j] != 0) assignment[match[j] - 1] = j - 1;
  return assignment;
}

Matrix log1p_normalize(const Matrix& counts) {
  Matrix out(counts.rows(), counts.cols());
  for (Index n = 0; n < counts.rows(); ++n) {
    const double total = counts.row(n).sum();
    const double scale = total > 0 ? 1e4 / total : 0.0;
    out.row(n) = (counts.row(n).array() * scale).log1p();
  }
  return out;
}

Matrix pairing_cost(const Matrix& perturbed_counts, const Matrix& control_counts) {
  if (perturbed_counts.cols() != control_counts.cols())
    throw ShapeError("pairing_cost: gene count mismatch");
  const Matrix a = log1p_normalize(perturbed_counts);
  const Matrix b = log1p_normalize(control_counts);
  Matrix cost(a.rows(), b.rows());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) cost(i, j) = (a.row(i) - b.row(j)).squaredNorm();
  return cost;
}

PairingPlan pair_optimal_transport(const Matrix& perturbed_counts, const Matrix& control_counts) {
  if (control_counts.rows() == 0) throw PairingError("pairing: empty control set");
  if (perturbed_counts.rows() == 0) throw PairingError("pairing: empty perturbed set");
  const Matrix cost = pairing_cost(perturbed_counts, control_counts);
  PairingPlan plan;
  const Index np = cost.rows(), nc = cost.cols();
  std::vector<char> control_used(nc, 0);
  if (np <= nc) {
    const auto a = solve_assignment(cost);
    for (Index i = 0; i < np; ++i) {
      plan.pairs.emplace_back(i, a[i]);
      control_used[a[i]] = 1;
      plan.total_cost += cost(i, a[i]);
    }
  } else {
    // Fewer controls than perturbed rows: every control is used once and the
    // surplus perturbed rows stay unmatched.
    const auto a = solve_assignment(cost.transpose());
    std::vector<char> perturbed_used(np, 0);
    for (Index j = 0; j < nc; ++j) {
      perturbed_used[a[j]] = 1;
      control_used[j] = 1;
    }
    for (Index j = 0; j < nc; ++j) plan.total_cost += cost(a[j], j);
    for (Index i = 0; i < np; ++i) {
      if (!perturbed_used[i]) {
        plan.unmatched_perturbed.push_back(i);
        continue;
      }
      const auto it = std::find(a.begin(), a.end(), i);
      plan.pairs.emplace_back(i, static_cast<Index>(it - a.begin()));
    }
  }
  for (Index j = 0; j < nc; ++j)
    if (!control_used[j]) plan.unmatched_controls.push_back(j);
  return plan;
}

namespace {

Matrix gather(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

}  // namespace

PairingPlan pair_by_treatment(const PerturbDataset& data) {
  const auto treat = data.treatment_index();
  std::vector<Index> controls;
  for (Index n = 0; n < data.n_cells(); ++n)
    if (treat[n] < 0) controls.push_back(n);
  PairingPlan plan;
  std::vector<char> control_used(controls.size(), 0);
  for (Index t = 0; t < data.treatments.cols(); ++t) {
    std::vector<Index> group;
    for (Index n = 0; n < data.n_cells(); ++n)
      if (treat[n] == t) group.push_back(n);
    if (group.empty()) continue;
    if (controls.empty()) {
      plan.unmatched_perturbed.insert(plan.unmatched_perturbed.end(), group.begin(), group.end());
      continue;
    }
    const PairingPlan sub = pair_optimal_transport(gather(data.counts, group), gather(data.counts, controls));
    for (auto [p, c] : sub.pairs) {
      plan.pairs.emplace_back(group[p], controls[c]);
      control_used[c] = 1;
    }
    for (Index p : sub.unmatched_perturbed) plan.unmatched_perturbed.push_back(group[p]);
    plan.total_cost += sub.total_cost;
  }
  for (std::size_t c = 0; c < controls.size(); ++c)
    if (!control_used[c]) plan.unmatched_controls.push_back(controls[c]);
  std::sort(plan.pairs.begin(), plan.pairs.end());
  std::sort(plan.unmatched_perturbed.begin(), plan.unmatched_perturbed.end());
  return plan;
}

std::vector<Index> pair_qc_references(const PerturbDataset& data) {
  std::vector<Index> ref(static_cast<std::size_t>(data.n_cells()), -1);
  const auto treat = data.treatment_index();
  for (Index t = -1; t < data.treatments.cols(); ++t) {
    std::vector<Index> failed, passed;
    for (Index n = 0; n < data.n_cells(); ++n) {
      if (treat[n] != t) continue;
      (data.qc(n) != 0.0 ? failed : passed).push_back(n);
    }
    if (failed.empty() || passed.empty()) continue;
    const PairingPlan sub = pair_optimal_transport(gather(data.counts, failed), gather(data.counts, passed));
    for (auto [f, p] : sub.pairs) ref[failed[f]] = passed[p];
  }
  return ref;
}

Index ReferenceDge::n_included() const {
  return static_cast<Index>(std::count(excluded.begin(), excluded.end(), 0));
}

ReferenceDge compute_reference_dge(const PerturbDataset& data, const PairingPlan& plan) {
  const Index n = data.n_cells();
  const auto causal = data.catalog.causal_idx();
  const Index t = static_cast<Index>(causal.size());
  ReferenceDge out;
  out.delta = Matrix::Zero(n, t);
  out.excluded.assign(static_cast<std::size_t>(n), 1);
  const auto treat = data.treatment_index();
  for (auto [p, c] : plan.pairs) {
    if (p < 0 || p >= n || c < 0 || c >= n) throw ShapeError("reference DGE: pair index out of range");
    if (treat[p] < 0) continue;  // controls stay zero vectors
    double row_max = 0.0;
    for (Index k = 0; k < t; ++k) {
      const double fold = std::abs(std::log2((data.counts(p, causal[k]) + 1.0) / (data.counts(c, causal[k]) + 1.0)));
      out.delta(p, k) = fold;
      row_max = std::max(row_max, fold);
    }
    if (row_max > 0.0) out.delta.row(p) /= row_max;
    out.excluded[p] = 0;
  }
  return out;
}

}  // namespace gpo::dataio
