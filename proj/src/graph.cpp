#include "graphife/graph.hpp"

#include "graphife/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace graphife {

namespace {

SparseMatrix symmetric_adjacency(std::int64_t n, std::span<const Edge> edges) {
  std::vector<std::pair<std::int64_t, std::int64_t>> directed;
  directed.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw DataError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                      ") references a node outside [0, " + std::to_string(n) + ")");
    }
    if (u == v) continue;
    directed.emplace_back(u, v);
    directed.emplace_back(v, u);
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
  std::vector<std::int64_t> offsets(static_cast<std::size_t>(n) + 1, 0);
  std::vector<std::int64_t> cols;
  cols.reserve(directed.size());
  for (const auto& [u, v] : directed) {
    ++offsets[static_cast<std::size_t>(u) + 1];
    cols.push_back(v);
  }
  for (std::size_t i = 1; i < offsets.size(); ++i) offsets[i] += offsets[i - 1];
  std::vector<double> values(cols.size(), 1.0);
  return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(values));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

Graph::Graph(Matrix features, std::vector<int> labels, std::span<const Edge> edges,
             int class_count)
    : features_(std::move(features)), labels_(std::move(labels)) {
  const auto n = static_cast<std::int64_t>(labels_.size());
  if (features_.rows() != n) {
    throw ShapeError("features have " + std::to_string(features_.rows()) + " rows but there are " +
                     std::to_string(n) + " labels");
  }
  require_finite(features_, "node features");
  int max_label = -1;
  for (int y : labels_) {
    if (y < 0) throw DataError("negative label " + std::to_string(y));
    max_label = std::max(max_label, y);
  }
  class_count_ = class_count < 0 ? max_label + 1 : class_count;
  if (max_label >= class_count_) {
    throw DataError("label " + std::to_string(max_label) + " outside class count " +
                    std::to_string(class_count_));
  }
  adjacency_ = symmetric_adjacency(n, edges);
  sparse_features_ = std::make_shared<const SparseMatrix>(SparseMatrix::from_dense(features_));
}

std::int64_t Graph::degree(std::int64_t v) const {
  const auto& off = adjacency_.row_offsets();
  return off[static_cast<std::size_t>(v) + 1] - off[static_cast<std::size_t>(v)];
}

std::vector<std::int64_t> Graph::degrees() const {
  std::vector<std::int64_t> d(static_cast<std::size_t>(num_nodes()));
  for (std::int64_t v = 0; v < num_nodes(); ++v) d[static_cast<std::size_t>(v)] = degree(v);
  return d;
}

std::span<const std::int64_t> Graph::neighbors(std::int64_t v) const {
  const auto& off = adjacency_.row_offsets();
  const auto begin = off[static_cast<std::size_t>(v)];
  const auto end = off[static_cast<std::size_t>(v) + 1];
  return {adjacency_.col_indices().data() + begin, static_cast<std::size_t>(end - begin)};
}

std::vector<Edge> Graph::edge_list() const {
  std::vector<Edge> out;
  out.reserve(static_cast<std::size_t>(num_edges()));
  for (std::int64_t u = 0; u < num_nodes(); ++u) {
    for (std::int64_t v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

std::vector<std::vector<std::int64_t>> Graph::nodes_by_class() const {
  std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(class_count_));
  for (std::int64_t v = 0; v < num_nodes(); ++v) out[static_cast<std::size_t>(label(v))].push_back(v);
  return out;
}

Graph load_content_cites(const std::string& content_path, const std::string& cites_path,
                         LoadReport* report) {
  std::ifstream content(content_path);
  if (!content) throw DataError("cannot open content file " + content_path);

  std::unordered_map<std::string, std::int64_t> index;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> label_names;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(content, line)) {
    ++line_no;
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    const std::string where = content_path + ":" + std::to_string(line_no);
    if (fields.size() < 2) throw DataError(where + ": node " + fields[0] + " has no label");
    if (!index.emplace(fields[0], static_cast<std::int64_t>(rows.size())).second) {
      throw DataError(where + ": duplicate node id " + fields[0]);
    }
    const std::size_t d = fields.size() - 2;
    if (rows.empty()) {
      dim = d;
    } else if (d != dim) {
      throw DataError(where + ": expected " + std::to_string(dim) + " features, found " +
                      std::to_string(d));
    }
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      try {
        std::size_t used = 0;
        row[j] = std::stod(fields[j + 1], &used);
        if (used != fields[j + 1].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw DataError(where + ": feature " + std::to_string(j) + " is not a number: " +
                        fields[j + 1]);
      }
    }
    rows.push_back(std::move(row));
    label_names.push_back(fields.back());
  }
  if (rows.empty()) throw DataError("content file " + content_path + " is empty");

  std::set<std::string> distinct(label_names.begin(), label_names.end());
  std::map<std::string, int> class_of;
  LoadReport local;
  for (const auto& name : distinct) {
    class_of.emplace(name, static_cast<int>(local.class_names.size()));
    local.class_names.push_back(name);
  }

  const auto n = static_cast<std::int64_t>(rows.size());
  Matrix features(n, static_cast<Eigen::Index>(dim));
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < dim; ++j) features(i, static_cast<Eigen::Index>(j)) = row[j];
    labels[static_cast<std::size_t>(i)] = class_of.at(label_names[static_cast<std::size_t>(i)]);
  }

  std::ifstream cites(cites_path);
  if (!cites) throw DataError("cannot open cites file " + cites_path);
  std::vector<Edge> edges;
  std::set<Edge> seen;
  line_no = 0;
  while (std::getline(cites, line)) {
    ++line_no;
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 2) {
      throw DataError(cites_path + ":" + std::to_string(line_no) + ": expected 2 ids, found " +
                      std::to_string(fields.size()));
    }
    auto a = index.find(fields[0]);
    auto b = index.find(fields[1]);
    if (a == index.end() || b == index.end()) {
      ++local.dropped_edges;
      continue;
    }
    if (a->second == b->second) {
      ++local.self_loops;
      continue;
    }
    Edge e = std::minmax(a->second, b->second);
    if (!seen.insert(e).second) {
      ++local.duplicate_edges;
      continue;
    }
    edges.push_back(e);
  }
  if (report != nullptr) *report = std::move(local);
  return Graph(std::move(features), std::move(labels), edges);
}

Graph load_json_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(name)) throw DataError(path + ": missing field '" + name + "'");
    return j.at(name);
  };
  const auto& jn = field("num_nodes");
  if (!jn.is_number_integer() || jn.get<std::int64_t>() < 0) {
    throw DataError(path + ": field 'num_nodes' must be a non-negative integer");
  }
  const auto n = jn.get<std::int64_t>();

  const auto& jf = field("features");
  if (!jf.is_array() || static_cast<std::int64_t>(jf.size()) != n) {
    throw DataError(path + ": field 'features' must be an array of num_nodes rows");
  }
  const std::size_t dim = n > 0 && jf[0].is_array() ? jf[0].size() : 0;
  Matrix features(n, static_cast<Eigen::Index>(dim));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& row = jf[static_cast<std::size_t>(i)];
    if (!row.is_array() || row.size() != dim) {
      throw DataError(path + ": field 'features' row " + std::to_string(i) + " must have " +
                      std::to_string(dim) + " numbers");
    }
    for (std::size_t k = 0; k < dim; ++k) {
      if (!row[k].is_number()) {
        throw DataError(path + ": field 'features' row " + std::to_string(i) + " has a non-number");
      }
      features(i, static_cast<Eigen::Index>(k)) = row[k].get<double>();
    }
  }

  const auto& jl = field("labels");
  if (!jl.is_array() || static_cast<std::int64_t>(jl.size()) != n) {
    throw DataError(path + ": field 'labels' must be an array of num_nodes integers");
  }
  std::vector<int> labels;
  for (const auto& y : jl) {
    if (!y.is_number_integer() || y.get<int>() < 0) {
      throw DataError(path + ": field 'labels' must hold non-negative integers");
    }
    labels.push_back(y.get<int>());
  }

  const auto& je = field("edges");
  if (!je.is_array()) throw DataError(path + ": field 'edges' must be an array of pairs");
  std::vector<Edge> edges;
  for (const auto& e : je) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw DataError(path + ": field 'edges' must hold [u, v] integer pairs");
    }
    const auto u = e[0].get<std::int64_t>();
    const auto v = e[1].get<std::int64_t>();
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw DataError(path + ": field 'edges' has out-of-range pair [" + std::to_string(u) + ", " +
                      std::to_string(v) + "]");
    }
    edges.emplace_back(u, v);
  }
  return Graph(std::move(features), std::move(labels), edges);
}

void save_json_graph(const Graph& g, const std::string& path) {
  nlohmann::json j;
  j["num_nodes"] = g.num_nodes();
  auto features = nlohmann::json::array();
  for (std::int64_t i = 0; i < g.num_nodes(); ++i) {
    auto row = nlohmann::json::array();
    for (std::int64_t k = 0; k < g.feature_dim(); ++k) row.push_back(g.features()(i, k));
    features.push_back(std::move(row));
  }
  j["features"] = std::move(features);
  j["labels"] = g.labels();
  auto edges = nlohmann::json::array();
  for (const auto& [u, v] : g.edge_list()) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write graph file " + path);
  out << j.dump() << '\n';
}

SparseMatrix gcn_normalize(const Graph& g) {
  const std::int64_t n = g.num_nodes();
  auto weight = [&](std::int64_t u, std::int64_t v) {
    return 1.0 / std::sqrt(static_cast<double>((g.degree(u) + 1) * (g.degree(v) + 1)));
  };
  std::vector<std::int64_t> offsets{0};
  std::vector<std::int64_t> cols;
  std::vector<double> values;
  offsets.reserve(static_cast<std::size_t>(n) + 1);
  cols.reserve(static_cast<std::size_t>(g.adjacency().nonzeros() + n));
  values.reserve(cols.capacity());
  for (std::int64_t u = 0; u < n; ++u) {
    bool self_done = false;
    for (std::int64_t v : g.neighbors(u)) {
      if (!self_done && v > u) {
        cols.push_back(u);
        values.push_back(weight(u, u));
        self_done = true;
      }
      cols.push_back(v);
      values.push_back(weight(u, v));
    }
    if (!self_done) {
      cols.push_back(u);
      values.push_back(weight(u, u));
    }
    offsets.push_back(static_cast<std::int64_t>(cols.size()));
  }
  return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(values));
}

SparseMatrix mean_aggregator(const Graph& g) {
  const auto& a = g.adjacency();
  std::vector<double> values(a.values().size());
  for (std::int64_t u = 0; u < g.num_nodes(); ++u) {
    const auto begin = a.row_offsets()[static_cast<std::size_t>(u)];
    const auto end = a.row_offsets()[static_cast<std::size_t>(u) + 1];
    for (auto k = begin; k < end; ++k) {
      values[static_cast<std::size_t>(k)] = 1.0 / static_cast<double>(end - begin);
    }
  }
  return SparseMatrix(a.rows(), a.cols(), a.row_offsets(), a.col_indices(), std::move(values));
}

SparseMatrix closed_mean_aggregator(const Graph& g) {
  SparseMatrix norm = gcn_normalize(g);
  std::vector<double> values(norm.values().size());
  for (std::int64_t u = 0; u < g.num_nodes(); ++u) {
    const auto begin = norm.row_offsets()[static_cast<std::size_t>(u)];
    const auto end = norm.row_offsets()[static_cast<std::size_t>(u) + 1];
    for (auto k = begin; k < end; ++k) {
      values[static_cast<std::size_t>(k)] = 1.0 / static_cast<double>(end - begin);
    }
  }
  return SparseMatrix(norm.rows(), norm.cols(), norm.row_offsets(), norm.col_indices(),
                      std::move(values));
}

}  // namespace graphife
