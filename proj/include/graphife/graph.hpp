#pragma once

#include "graphife/matrix.hpp"
#include "graphife/sparse.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace graphife {

using Edge = std::pair<std::int64_t, std::int64_t>;

/// Immutable attributed graph: features X, labels Y and an undirected adjacency A.
///
/// Edges are symmetrized and deduplicated on construction; self-loops are dropped.
class Graph {
 public:
  Graph() = default;
  /// `class_count` < 0 infers max(label) + 1.
  Graph(Matrix features, std::vector<int> labels, std::span<const Edge> edges,
        int class_count = -1);

  std::int64_t num_nodes() const { return static_cast<std::int64_t>(labels_.size()); }
  std::int64_t feature_dim() const { return features_.cols(); }
  int class_count() const { return class_count_; }
  /// Undirected edge count.
  std::int64_t num_edges() const { return adjacency_.nonzeros() / 2; }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  int label(std::int64_t v) const { return labels_[static_cast<std::size_t>(v)]; }
  const SparseMatrix& adjacency() const { return adjacency_; }

  std::int64_t degree(std::int64_t v) const;
  std::vector<std::int64_t> degrees() const;
  /// Sorted neighbor ids of v.
  std::span<const std::int64_t> neighbors(std::int64_t v) const;

  /// Features in CSR form (bag-of-words inputs are mostly zero).
  const std::shared_ptr<const SparseMatrix>& sparse_features() const { return sparse_features_; }

  /// Unique undirected edges (u < v) in row order.
  std::vector<Edge> edge_list() const;

  /// Node ids per class, ascending.
  std::vector<std::vector<std::int64_t>> nodes_by_class() const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  int class_count_ = 0;
  SparseMatrix adjacency_;
  std::shared_ptr<const SparseMatrix> sparse_features_;
};

struct LoadReport {
  std::int64_t dropped_edges = 0;    ///< cites rows naming an unknown node id
  std::int64_t duplicate_edges = 0;  ///< rows repeating an already seen undirected edge
  std::int64_t self_loops = 0;
  std::vector<std::string> class_names;  ///< index -> label string
};

/// Planetoid-style `.content` / `.cites` pair (tab or space separated).
Graph load_content_cites(const std::string& content_path, const std::string& cites_path,
                         LoadReport* report = nullptr);

/// JSON object with `num_nodes`, `features`, `labels`, `edges`.
Graph load_json_graph(const std::string& path);
void save_json_graph(const Graph& g, const std::string& path);

/// D^{-1/2} (A + I) D^{-1/2}.
SparseMatrix gcn_normalize(const Graph& g);
/// Row-normalized adjacency D^{-1} A; isolated nodes get an empty row.
SparseMatrix mean_aggregator(const Graph& g);
/// (D + I)^{-1} (A + I): mean over each node's closed neighborhood.
SparseMatrix closed_mean_aggregator(const Graph& g);

}  // namespace graphife
