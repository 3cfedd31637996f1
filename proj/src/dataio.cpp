#include "gpo/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace gpo::dataio {

namespace {

bool same_shape(const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols(); }

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(strip_cr(line));
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string location(const std::filesystem::path& p, std::size_t line) {
  return p.filename().string() + ":" + std::to_string(line);
}

}  // namespace

std::string to_string(GeneRole role) {
  switch (role) {
    case GeneRole::perturbed: return "perturbed";
    case GeneRole::extended: return "extended";
    case GeneRole::measured: return "measured";
  }
  return "measured";
}

GeneRole parse_role(const std::string& text) {
  if (text == "perturbed") return GeneRole::perturbed;
  if (text == "extended") return GeneRole::extended;
  if (text == "measured") return GeneRole::measured;
  throw ParseError("unknown gene role '" + text + "'");
}

// ---- GeneCatalog -------------------------------------------------------------

std::vector<Index> GeneCatalog::causal_idx() const {
  std::vector<Index> out(perturbed_idx);
  out.insert(out.end(), extended_idx.begin(), extended_idx.end());
  return out;
}

std::vector<std::string> GeneCatalog::causal_names() const {
  std::vector<std::string> out;
  for (Index g : causal_idx()) out.push_back(names[g]);
  return out;
}

std::optional<Index> GeneCatalog::find(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<Index>(it - names.begin());
}

std::optional<Index> GeneCatalog::causal_position(const std::string& name) const {
  const auto g = find(name);
  if (!g) return std::nullopt;
  const auto causal = causal_idx();
  auto it = std::find(causal.begin(), causal.end(), *g);
  if (it == causal.end()) return std::nullopt;
  return static_cast<Index>(it - causal.begin());
}

GeneRole GeneCatalog::role(Index gene) const {
  if (std::find(perturbed_idx.begin(), perturbed_idx.end(), gene) != perturbed_idx.end())
    return GeneRole::perturbed;
  if (std::find(extended_idx.begin(), extended_idx.end(), gene) != extended_idx.end())
    return GeneRole::extended;
  return GeneRole::measured;
}

void GeneCatalog::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw ValidationError("gene catalog: empty gene name");
    if (!seen.insert(n).second) throw ValidationError("gene catalog: duplicate gene '" + n + "'");
  }
  std::unordered_set<Index> pert;
  for (Index g : perturbed_idx) {
    if (g < 0 || g >= n_genes()) throw ValidationError("gene catalog: perturbed index out of range");
    pert.insert(g);
  }
  for (Index g : extended_idx) {
    if (g < 0 || g >= n_genes()) throw ValidationError("gene catalog: extended index out of range");
    if (pert.contains(g))
      throw ValidationError("gene catalog: '" + names[g] + "' is both perturbed and extended");
  }
}

// ---- PerturbDataset ----------------------------------------------------------

std::vector<Index> PerturbDataset::treatment_index() const {
  std::vector<Index> out(static_cast<std::size_t>(n_cells()), -1);
  for (Index n = 0; n < n_cells(); ++n) {
    for (Index t = 0; t < treatments.cols(); ++t)
      if (treatments(n, t) != 0.0) {
        out[n] = t;
        break;
      }
  }
  return out;
}

std::vector<Index> PerturbDataset::rows_with_treatment(Index pos) const {
  std::vector<Index> out;
  const auto idx = treatment_index();
  for (Index n = 0; n < n_cells(); ++n)
    if (idx[n] == pos) out.push_back(n);
  return out;
}

PerturbDataset PerturbDataset::subset(std::span<const Index> rows) const {
  PerturbDataset out;
  out.catalog = catalog;
  const Index m = static_cast<Index>(rows.size());
  out.counts.resize(m, counts.cols());
  out.treatments.resize(m, treatments.cols());
  out.qc.resize(m);
  out.library_size.resize(m);
  for (Index k = 0; k < m; ++k) {
    const Index r = rows[k];
    out.counts.row(k) = counts.row(r);
    out.treatments.row(k) = treatments.row(r);
    out.qc(k) = qc(r);
    out.library_size(k) = library_size(r);
  }
  return out;
}

void PerturbDataset::validate() const {
  catalog.validate();
  const Index n = n_cells();
  if (counts.cols() != catalog.n_genes())
    throw ValidationError("dataset: expression has " + std::to_string(counts.cols()) +
                          " columns but catalog has " + std::to_string(catalog.n_genes()) + " genes");
  if (treatments.rows() != n || qc.size() != n || library_size.size() != n)
    throw ValidationError("dataset: row counts disagree across X, P, A, L");
  if (treatments.cols() != catalog.n_causal())
    throw ValidationError("dataset: treatment matrix width does not match |G°∪G+|");
  for (Index i = 0; i < n; ++i) {
    double row_total = 0.0;
    for (Index g = 0; g < counts.cols(); ++g) {
      const double v = counts(i, g);
      if (!(v >= 0.0) || v != std::floor(v))
        throw ValidationError("dataset: non-integer or negative count at row " + std::to_string(i) +
                              ", column " + std::to_string(g));
      row_total += v;
    }
    if (library_size(i) != row_total)
      throw ValidationError("dataset: library size mismatch at row " + std::to_string(i));
    double active = 0.0;
    for (Index t = 0; t < treatments.cols(); ++t) {
      const double v = treatments(i, t);
      if (v != 0.0 && v != 1.0)
        throw ValidationError("dataset: non-binary treatment at row " + std::to_string(i));
      active += v;
    }
    if (active > 1.0) throw ValidationError("dataset: multi-hot treatment at row " + std::to_string(i));
    if (qc(i) != 0.0 && qc(i) != 1.0)
      throw ValidationError("dataset: non-binary QC flag at row " + std::to_string(i));
  }
}

bool operator==(const PerturbDataset& a, const PerturbDataset& b) {
  return a.catalog == b.catalog && same_shape(a.counts, b.counts) && a.counts == b.counts &&
         same_shape(a.treatments, b.treatments) && a.treatments == b.treatments &&
         a.qc.size() == b.qc.size() && a.qc == b.qc && a.library_size.size() == b.library_size.size() &&
         a.library_size == b.library_size;
}

// ---- ground truth ------------------------------------------------------------

std::vector<std::pair<Index, Index>> GroundTruthGrn::edge_set() const {
  std::vector<std::pair<Index, Index>> out;
  for (Index i = 0; i < adjacency.rows(); ++i)
    for (Index j = 0; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != 0.0) out.emplace_back(i, j);
  return out;
}

bool GroundTruthGrn::is_acyclic() const {
  // Kahn's algorithm
  const Index n = adjacency.rows();
  std::vector<int> indeg(n, 0);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (adjacency(i, j) != 0.0) ++indeg[j];
  std::vector<Index> ready;
  for (Index j = 0; j < n; ++j)
    if (indeg[j] == 0) ready.push_back(j);
  Index visited = 0;
  while (!ready.empty()) {
    const Index v = ready.back();
    ready.pop_back();
    ++visited;
    for (Index j = 0; j < n; ++j)
      if (adjacency(v, j) != 0.0 && --indeg[j] == 0) ready.push_back(j);
  }
  return visited == n;
}

// ---- TSV io ------------------------------------------------------------------

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "expression.tsv", dir / "treatments.tsv", dir / "qc.tsv", dir / "catalog.tsv"};
}

namespace {

GeneCatalog read_catalog(const std::filesystem::path& path) {
  GeneCatalog cat;
  const auto lines = read_lines(path);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto fields = split_tabs(lines[k]);
    if (fields.size() != 2)
      throw ParseError(location(path, k + 1) + ": expected 'gene<TAB>role'");
    const Index g = static_cast<Index>(cat.names.size());
    cat.names.push_back(fields[0]);
    GeneRole role;
    try {
      role = parse_role(fields[1]);
    } catch (const ParseError& e) {
      throw ParseError(location(path, k + 1) + ": " + e.what());
    }
    if (role == GeneRole::perturbed) cat.perturbed_idx.push_back(g);
    if (role == GeneRole::extended) cat.extended_idx.push_back(g);
  }
  try {
    cat.validate();
  } catch (const ValidationError& e) {
    throw ParseError(path.filename().string() + ": " + e.what());
  }
  return cat;
}

Matrix read_expression(const std::filesystem::path& path, const GeneCatalog& cat) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw ParseError(path.filename().string() + ": missing header");
  const auto header = split_tabs(lines[0]);
  if (static_cast<Index>(header.size()) != cat.n_genes())
    throw ParseError(location(path, 1) + ": header has " + std::to_string(header.size()) +
                     " genes, catalog has " + std::to_string(cat.n_genes()));
  for (std::size_t g = 0; g < header.size(); ++g)
    if (header[g] != cat.names[g])
      throw ParseError(location(path, 1) + ", column " + std::to_string(g + 1) + ": gene '" +
                       header[g] + "' does not match catalog entry '" + cat.names[g] + "'");
  Matrix x(static_cast<Index>(lines.size() - 1), cat.n_genes());
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto fields = split_tabs(lines[k]);
    if (static_cast<Index>(fields.size()) != cat.n_genes())
      throw ParseError(location(path, k + 1) + ": expected " + std::to_string(cat.n_genes()) +
                       " fields, got " + std::to_string(fields.size()));
    for (std::size_t g = 0; g < fields.size(); ++g) {
      const std::string& f = fields[g];
      std::uint64_t v = 0;
      auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || end != f.data() + f.size() || f.empty())
        throw ParseError(location(path, k + 1) + ", column " + std::to_string(g + 1) +
                         ": not a non-negative integer count '" + f + "'");
      x(static_cast<Index>(k - 1), static_cast<Index>(g)) = static_cast<double>(v);
    }
  }
  return x;
}

}  // namespace

PerturbDataset load_dataset(const DatasetPaths& paths) {
  PerturbDataset d;
  d.catalog = read_catalog(paths.catalog);
  d.counts = read_expression(paths.expression, d.catalog);
  const Index n = d.counts.rows();

  const auto treat = read_lines(paths.treatments);
  if (static_cast<Index>(treat.size()) != n)
    throw ParseError(paths.treatments.filename().string() + ": " + std::to_string(treat.size()) +
                     " rows but expression has " + std::to_string(n));
  const auto causal = d.catalog.causal_names();
  std::unordered_map<std::string, Index> pos;
  for (std::size_t t = 0; t < causal.size(); ++t) pos[causal[t]] = static_cast<Index>(t);
  d.treatments = Matrix::Zero(n, d.catalog.n_causal());
  for (Index k = 0; k < n; ++k) {
    const std::string& t = treat[k];
    if (t == "control") continue;
    if (t.find('\t') != std::string::npos || t.find('+') != std::string::npos)
      throw ParseError(location(paths.treatments, k + 1) + ": multi-gene treatment '" + t + "'");
    auto it = pos.find(t);
    if (it == pos.end())
      throw ParseError(location(paths.treatments, k + 1) + ": treatment gene '" + t +
                       "' is not in G°∪G+");
    d.treatments(k, it->second) = 1.0;
  }

  const auto qc = read_lines(paths.qc);
  if (static_cast<Index>(qc.size()) != n)
    throw ParseError(paths.qc.filename().string() + ": " + std::to_string(qc.size()) +
                     " rows but expression has " + std::to_string(n));
  d.qc.resize(n);
  for (Index k = 0; k < n; ++k) {
    if (qc[k] == "0") d.qc(k) = 0.0;
    else if (qc[k] == "1") d.qc(k) = 1.0;
    else throw ParseError(location(paths.qc, k + 1) + ": QC flag must be 0 or 1, got '" + qc[k] + "'");
  }
  d.library_size = d.counts.rowwise().sum();
  d.validate();
  return d;
}

void save_dataset(const PerturbDataset& d, const DatasetPaths& paths) {
  d.validate();
  {
    auto out = open_out(paths.catalog);
    for (Index g = 0; g < d.catalog.n_genes(); ++g)
      out << d.catalog.names[g] << '\t' << to_string(d.catalog.role(g)) << '\n';
  }
  {
    auto out = open_out(paths.expression);
    for (Index g = 0; g < d.catalog.n_genes(); ++g) out << (g ? "\t" : "") << d.catalog.names[g];
    out << '\n';
    for (Index n = 0; n < d.n_cells(); ++n) {
      for (Index g = 0; g < d.counts.cols(); ++g)
        out << (g ? "\t" : "") << static_cast<std::uint64_t>(d.counts(n, g));
      out << '\n';
    }
  }
  {
    auto out = open_out(paths.treatments);
    const auto causal = d.catalog.causal_names();
    const auto idx = d.treatment_index();
    for (Index n = 0; n < d.n_cells(); ++n) out << (idx[n] < 0 ? "control" : causal[idx[n]]) << '\n';
  }
  {
    auto out = open_out(paths.qc);
    for (Index n = 0; n < d.n_cells(); ++n) out << (d.qc(n) != 0.0 ? '1' : '0') << '\n';
  }
}

void save_ground_truth(const GroundTruthGrn& grn, const GeneCatalog& catalog,
                       const std::filesystem::path& path) {
  const auto names = catalog.causal_names();
  auto out = open_out(path);
  out << "source\ttarget\tweight\n";
  char buf[64];
  for (auto [i, j] : grn.edge_set()) {
    std::snprintf(buf, sizeof buf, "%.17g", grn.adjacency(i, j));
    out << names[i] << '\t' << names[j] << '\t' << buf << '\n';
  }
}

GroundTruthGrn load_ground_truth(const std::filesystem::path& path, const GeneCatalog& catalog) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "source\ttarget\tweight")
    throw ParseError(location(path, 1) + ": expected header 'source<TAB>target<TAB>weight'");
  GroundTruthGrn g;
  g.adjacency = Matrix::Zero(catalog.n_causal(), catalog.n_causal());
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto f = split_tabs(lines[k]);
    if (f.size() != 3) throw ParseError(location(path, k + 1) + ": expected 3 fields");
    const auto s = catalog.causal_position(f[0]);
    const auto t = catalog.causal_position(f[1]);
    if (!s || !t) throw ParseError(location(path, k + 1) + ": unknown gene");
    try {
      g.adjacency(*s, *t) = std::stod(f[2]);
    } catch (const std::exception&) {
      throw ParseError(location(path, k + 1) + ": bad weight '" + f[2] + "'");
    }
  }
  return g;
}

// ---- splits ------------------------------------------------------------------

DatasetSplits split_dataset(const PerturbDataset& data, std::uint64_t seed,
                            const std::vector<std::string>& holdout_perturbations,
                            double train_fraction, double val_fraction) {
  if (train_fraction < 0 || val_fraction < 0 || train_fraction + val_fraction > 1.0)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  std::unordered_set<Index> holdout;
  for (const auto& name : holdout_perturbations) {
    const auto pos = data.catalog.causal_position(name);
    if (!pos || !data.catalog.is_perturbed_causal(*pos))
      throw ConfigError("holdout gene '" + name + "' is not a perturbed gene");
    holdout.insert(*pos);
  }
  const auto treat = data.treatment_index();
  DatasetSplits s;
  std::vector<Index> pool;
  for (Index n = 0; n < data.n_cells(); ++n) {
    if (treat[n] >= 0 && holdout.contains(treat[n])) s.test_rows.push_back(n);
    else pool.push_back(n);
  }
  Rng rng = make_rng(seed, 0x5b117);
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto m = static_cast<double>(pool.size());
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * m));
  const auto n_val = std::min(pool.size() - n_train, static_cast<std::size_t>(std::llround(val_fraction * m)));
  s.train_rows.assign(pool.begin(), pool.begin() + n_train);
  s.val_rows.assign(pool.begin() + n_train, pool.begin() + n_train + n_val);
  s.test_rows.insert(s.test_rows.end(), pool.begin() + n_train + n_val, pool.end());
  for (auto* v : {&s.train_rows, &s.val_rows, &s.test_rows}) std::sort(v->begin(), v->end());
  s.train = data.subset(s.train_rows);
  s.val = data.subset(s.val_rows);
  s.test = data.subset(s.test_rows);
  return s;
}

}  // namespace gpo::dataio
