#pragma once

#include "graphife/graph.hpp"
#include "graphife/split.hpp"

#include <vector>

namespace graphife {

/// Neighbor-label distribution statistics.
struct NldStats {
  /// n x C neighbor label counts; row v sums to degree(v).
  Matrix counts;
  /// Per node: share of neighbors carrying the node's own label (0 when isolated).
  std::vector<double> same_label;
  /// Per class, over that class's training nodes.
  std::vector<double> mean;
  std::vector<double> min;
  std::vector<double> max;
  /// Per class sampling weight in [0, 1].
  std::vector<double> weight;
};

/// clamp((mean - min) / (max - mean), 0, 1); 1 when max - mean is within 1e-12 of zero.
double nld_weight(double mean, double min, double max);

/// Neighbor labels are read from the ground truth for every node.
NldStats neighbor_label_stats(const Graph& g, const ImbalancedSplit& split);

}  // namespace graphife
