#pragma once

#include "graphife/graph.hpp"
#include "graphife/nld.hpp"
#include "graphife/rng.hpp"
#include "graphife/split.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace graphife {

/// One synthesized minority node.
struct SynthesisRecord {
  std::int64_t anchor = 0;  ///< train node of new_class
  std::int64_t target = 0;  ///< any train node
  double mix_ratio = 1.0;   ///< weight of the anchor, in [0.5, 1]
  int new_class = 0;
  std::int64_t new_node_id = 0;
  std::vector<std::int64_t> neighbors;  ///< original nodes, filled by wire_neighbors
};

struct SynthesisPlan {
  std::int64_t base_nodes = 0;
  std::vector<SynthesisRecord> records;
};

/// Tops every class up to the largest train count.
///
/// Anchors are drawn uniformly from the class's train nodes (restricted to `anchor_mask` when
/// given), targets uniformly from all train nodes, and p ~ Beta(beta, beta) folded to
/// max(p, 1 - p).
SynthesisPlan plan_synthesis(const Graph& g, const ImbalancedSplit& split, double beta, Rng& rng,
                             const std::vector<char>* anchor_mask = nullptr);

/// Row per record: p x[anchor] + (1 - p) x[target].
Matrix mix_features(const Matrix& x, const SynthesisPlan& plan);

/// (n + q) x n operator [I; M] with M's row r holding p at the anchor and 1 - p at the target,
/// so mixing_operator(plan) * X stacks the originals and the mixed rows.
SparseMatrix mixing_operator(const SynthesisPlan& plan);

struct NeighborDistribution {
  std::vector<std::int64_t> candidates;  ///< ascending node ids
  std::vector<double> probabilities;
};

/// Before `warmup` epochs: uniform over N(anchor). Afterwards: mass p on N(anchor) and 1 - p on
/// N(target), scaled by the candidate class's NLD weight and renormalized (falling back to the
/// unweighted mass if the weights remove everything). Throws DataError when the support is empty.
NeighborDistribution neighbor_distribution(const SynthesisRecord& record, const Graph& g,
                                           const NldStats& nld, int epoch, int warmup);

/// neighbor_distribution with fallbacks for empty supports: the target's neighbors, then the
/// two parents themselves.
NeighborDistribution resolve_neighbor_distribution(const SynthesisRecord& record, const Graph& g,
                                                   const NldStats& nld, int epoch, int warmup);

/// Degree multiset of each class's train nodes.
std::vector<std::vector<std::int64_t>> train_degrees_by_class(const Graph& g,
                                                              const ImbalancedSplit& split);

/// Degree drawn from `class_degrees` (min 1), then that many neighbors drawn without replacement
/// from `dist`, capped at its support size. Returned ascending.
std::vector<std::int64_t> sample_degree_and_neighbors(const NeighborDistribution& dist,
                                                      const std::vector<std::int64_t>& class_degrees,
                                                      Rng& rng);

/// Per node: same-label neighbor share >= epsilon. Throws ConfigError if a class loses every
/// train node.
std::vector<char> light_filter(const Graph& g, const ImbalancedSplit& split, const NldStats& nld,
                               double epsilon);

/// Samples neighbors for every record in place.
void wire_neighbors(SynthesisPlan& plan, const Graph& g, const ImbalancedSplit& split,
                    const NldStats& nld, int epoch, int warmup, Rng& rng);

struct BalancedGraph {
  Graph graph;
  ImbalancedSplit split;
};

/// Appends the synthesized nodes (features `mixed`, one row per record) with their edges and
/// adds them to the train set.
BalancedGraph build_balanced_graph(const Graph& g, const ImbalancedSplit& split,
                                   const SynthesisPlan& plan, const Matrix& mixed);

/// As build_balanced_graph but without node features (zero-width feature matrix); enough for
/// propagation operators.
BalancedGraph build_balanced_topology(const Graph& g, const ImbalancedSplit& split,
                                      const SynthesisPlan& plan);

nlohmann::json plan_to_json(const SynthesisPlan& plan);

}  // namespace graphife
