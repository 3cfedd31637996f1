#include "gpo/grn.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "gpo/diffcore.hpp"

namespace gpo::grn {

namespace {

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

constexpr const char* kHeader = "source\ttarget\tprobability";

}  // namespace

Matrix GrnGraph::weighted_adjacency() const {
  Matrix w = Matrix::Zero(prob.rows(), prob.cols());
  for (const auto& e : edges) w(e.source, e.target) = e.probability;
  return w;
}

std::vector<NamedEdge> GrnGraph::named_edges() const {
  std::vector<NamedEdge> out;
  out.reserve(edges.size());
  for (const auto& e : edges) out.push_back({nodes[e.source], nodes[e.target], e.probability});
  return out;
}

Index GrnGraph::find(const std::string& name) const {
  const auto it = std::find(nodes.begin(), nodes.end(), name);
  return it == nodes.end() ? -1 : static_cast<Index>(it - nodes.begin());
}

GrnGraph make_graph(std::vector<std::string> nodes, Index n_perturbed, Matrix prob, double threshold) {
  const Index n = static_cast<Index>(nodes.size());
  if (prob.rows() != n || prob.cols() != n)
    throw ShapeError("grn: probability matrix " + shape_str(prob) + " does not match " + std::to_string(n) + " nodes");
  if (n_perturbed < 0 || n_perturbed > n) throw ShapeError("grn: perturbed count out of range");
  GrnGraph g;
  g.nodes = std::move(nodes);
  g.n_perturbed = n_perturbed;
  g.prob = std::move(prob);
  g.threshold = threshold;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (g.prob(i, j) > threshold) g.edges.push_back({i, j, g.prob(i, j)});
  return g;
}

GrnGraph extract_grn(const model::ModelState& state, double threshold, Restrict restrict) {
  Matrix prob = state.prob();
  std::vector<std::string> names = state.causal_names;
  if (static_cast<Index>(names.size()) != prob.rows()) throw ShapeError("grn: state has no causal gene names");
  Index n_perturbed = state.config.n_perturbed;
  if (restrict == Restrict::perturbed_only) {
    prob = prob.topLeftCorner(n_perturbed, n_perturbed).eval();
    names.resize(static_cast<std::size_t>(n_perturbed));
  }
  return make_graph(std::move(names), n_perturbed, std::move(prob), threshold);
}

// ---- degrees -------------------------------------------------------------------

std::vector<std::string> DegreeStats::top_hubs(std::size_t k) const {
  std::vector<std::string> out;
  for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) out.push_back(nodes[ranking[r]].name);
  return out;
}

DegreeStats degree_stats(const GrnGraph& graph, double weight_threshold) {
  DegreeStats s;
  const Index n = graph.n_nodes();
  for (Index i = 0; i < n; ++i) s.nodes.push_back({graph.nodes[i], 0, 0});
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (graph.prob(i, j) > weight_threshold) {
        ++s.nodes[i].out_degree;
        ++s.nodes[j].in_degree;
      }
  s.ranking.resize(static_cast<std::size_t>(n));
  std::iota(s.ranking.begin(), s.ranking.end(), Index{0});
  std::sort(s.ranking.begin(), s.ranking.end(), [&](Index a, Index b) {
    const Index ca = s.nodes[a].combined(), cb = s.nodes[b].combined();
    return ca != cb ? ca > cb : s.nodes[a].name < s.nodes[b].name;
  });
  return s;
}

nlohmann::json to_json(const DegreeStats& stats) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& d : stats.nodes)
    nodes.push_back({{"gene", d.name}, {"in_degree", d.in_degree}, {"out_degree", d.out_degree},
                     {"combined", d.combined()}});
  nlohmann::json ranking = nlohmann::json::array();
  for (Index r : stats.ranking) ranking.push_back(stats.nodes[r].name);
  return {{"nodes", nodes}, {"ranking", ranking}};
}

// ---- reachability -------------------------------------------------------------

Vector khop_reach(const GrnGraph& graph, const std::string& source, int k_hops) {
  const Index s = graph.find(source);
  if (s < 0) throw ValidationError("khop_reach: unknown gene '" + source + "'");
  const Matrix t = diffcore::matrix_power_sum(graph.weighted_adjacency(), k_hops,
                                              1.0 / static_cast<double>(graph.n_nodes()));
  return t.row(s).transpose();
}

std::vector<Path> extended_paths(const GrnGraph& graph, const std::string& source, int max_edges) {
  const Index s = graph.find(source);
  if (s < 0) throw ValidationError("extended_paths: unknown gene '" + source + "'");
  std::vector<std::vector<Index>> out_edges(static_cast<std::size_t>(graph.n_nodes()));
  for (const auto& e : graph.edges)
    if (e.source != e.target) out_edges[e.source].push_back(e.target);

  std::vector<Path> paths;
  Path current{{s}, 1.0};
  std::vector<char> on_path(static_cast<std::size_t>(graph.n_nodes()), 0);
  on_path[s] = 1;
  auto dfs = [&](auto&& self, Index node, bool through_extended) -> void {
    if (static_cast<int>(current.nodes.size()) - 1 >= max_edges) return;
    for (Index next : out_edges[node]) {
      if (on_path[next]) continue;
      const double w = current.weight;
      current.nodes.push_back(next);
      current.weight *= graph.prob(node, next);
      on_path[next] = 1;
      const bool is_perturbed = next < graph.n_perturbed;
      if (is_perturbed && through_extended) paths.push_back(current);
      self(self, next, through_extended || !is_perturbed);
      on_path[next] = 0;
      current.nodes.pop_back();
      current.weight = w;
    }
  };
  dfs(dfs, s, false);
  return paths;
}

GrnGraph degree_matched_random(const GrnGraph& graph, std::uint64_t seed, int swaps_per_edge) {
  GrnGraph out = graph;
  out.prob.setZero();
  std::vector<Edge> edges;
  for (const auto& e : graph.edges) {
    if (e.source == e.target)
      out.prob(e.source, e.target) = e.probability;
    else
      edges.push_back(e);
  }
  Matrix present = Matrix::Zero(graph.n_nodes(), graph.n_nodes());
  for (const auto& e : graph.edges) present(e.source, e.target) = 1.0;
  if (edges.size() >= 2) {
    Rng rng = make_rng(seed, 0x72616e64);
    std::uniform_int_distribution<std::size_t> pick(0, edges.size() - 1);
    const long attempts = static_cast<long>(swaps_per_edge) * static_cast<long>(edges.size());
    for (long a = 0; a < attempts; ++a) {
      Edge& x = edges[pick(rng)];
      Edge& y = edges[pick(rng)];
      // (s1,t1),(s2,t2) -> (s1,t2),(s2,t1); rejected if it makes a self-loop or a duplicate
      if (x.source == y.source || x.target == y.target) continue;
      if (x.source == y.target || y.source == x.target) continue;
      if (present(x.source, y.target) != 0.0 || present(y.source, x.target) != 0.0) continue;
      present(x.source, x.target) = present(y.source, y.target) = 0.0;
      present(x.source, y.target) = present(y.source, x.target) = 1.0;
      std::swap(x.target, y.target);
    }
  }
  for (const auto& e : edges) out.prob(e.source, e.target) = e.probability;
  return make_graph(out.nodes, out.n_perturbed, out.prob, graph.threshold);
}

// ---- edge lists ---------------------------------------------------------------

void export_edges(const GrnGraph& graph, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kHeader << '\n';
  char buf[64];
  for (const auto& e : graph.edges) {
    std::snprintf(buf, sizeof buf, "%.6f", e.probability);
    out << graph.nodes[e.source] << '\t' << graph.nodes[e.target] << '\t' << buf << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<NamedEdge> import_edges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string where = path.filename().string() + ":";
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(where + "1: missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw ParseError(where + "1: expected header 'source<TAB>target<TAB>probability'");

  std::vector<NamedEdge> edges;
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    const std::string at = where + std::to_string(line_no);
    if (f.size() != 3 || f[0].empty() || f[1].empty()) throw ParseError(at + ": expected 3 fields");
    double p = 0.0;
    try {
      std::size_t used = 0;
      p = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument(f[2]);
    } catch (const std::exception&) {
      throw ParseError(at + ": bad probability '" + f[2] + "'");
    }
    if (!(p >= 0.0 && p <= 1.0)) throw ParseError(at + ": probability outside [0,1]");
    if (!seen.insert({f[0], f[1]}).second) throw ParseError(at + ": duplicate edge " + f[0] + " -> " + f[1]);
    edges.push_back({f[0], f[1], p});
  }
  return edges;
}

}  // namespace gpo::grn
