#pragma once

// Thresholded regulatory graph read off the causal probabilities, with degree
// statistics, multi-hop reachability and an edge-list exchange format.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpo/common.hpp"
#include "gpo/model.hpp"

namespace gpo::grn {

struct Edge {
  Index source = 0;
  Index target = 0;
  double probability = 0.0;
};

struct NamedEdge {
  std::string source;
  std::string target;
  double probability = 0.0;
  friend bool operator==(const NamedEdge&, const NamedEdge&) = default;
};

enum class Restrict { all, perturbed_only };

/// Nodes are ordered perturbed-first; the first `n_perturbed` have
/// interventional data, the rest are extended genes.
struct GrnGraph {
  std::vector<std::string> nodes;
  Index n_perturbed = 0;
  Matrix prob;  // n x n, row = source
  double threshold = 0.5;
  std::vector<Edge> edges;  // row-major order, prob > threshold

  Index n_nodes() const { return static_cast<Index>(nodes.size()); }
  bool has_edge(Index s, Index t) const { return prob(s, t) > threshold; }
  /// Edge probabilities where an edge exists, zero elsewhere.
  Matrix weighted_adjacency() const;
  std::vector<NamedEdge> named_edges() const;
  Index find(const std::string& name) const;  // -1 when absent
};

/// Builds the graph with edges {(i,j) : prob(i,j) > threshold}.
GrnGraph make_graph(std::vector<std::string> nodes, Index n_perturbed, Matrix prob, double threshold);

GrnGraph extract_grn(const model::ModelState& state, double threshold = 0.5, Restrict restrict = Restrict::all);

struct NodeDegree {
  std::string name;
  Index in_degree = 0;
  Index out_degree = 0;
  Index combined() const { return in_degree + out_degree; }
};

struct DegreeStats {
  std::vector<NodeDegree> nodes;  // graph node order
  std::vector<Index> ranking;     // by combined degree descending, then name
  std::vector<std::string> top_hubs(std::size_t k) const;
};

/// Degrees over the entries with probability > weight_threshold.
DegreeStats degree_stats(const GrnGraph& graph, double weight_threshold = 0.3);
nlohmann::json to_json(const DegreeStats& stats);

/// Row `source` of W + (1/n) sum_{k=2..K} W^k over the edge-weighted adjacency.
Vector khop_reach(const GrnGraph& graph, const std::string& source, int k_hops);

struct Path {
  std::vector<Index> nodes;
  double weight = 1.0;  // product of edge probabilities
};

/// Simple paths of at most `max_edges` edges from `source` to another
/// perturbed gene whose intermediate nodes include at least one extended gene.
std::vector<Path> extended_paths(const GrnGraph& graph, const std::string& source, int max_edges = 3);

/// Random graph with the same in- and out-degree of every node, obtained by
/// double-edge swaps among the non-self-loop edges. Self-loops are kept.
/// Non-edges get probability 0.
GrnGraph degree_matched_random(const GrnGraph& graph, std::uint64_t seed, int swaps_per_edge = 10);

/// TSV with header `source\ttarget\tprobability`, probabilities to 6 decimals.
void export_edges(const GrnGraph& graph, const std::filesystem::path& path);
std::vector<NamedEdge> import_edges(const std::filesystem::path& path);

}  // namespace gpo::grn
