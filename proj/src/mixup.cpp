#include "graphife/mixup.hpp"

#include "graphife/error.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace graphife {

SynthesisPlan plan_synthesis(const Graph& g, const ImbalancedSplit& split, double beta, Rng& rng,
                             const std::vector<char>* anchor_mask) {
  if (!(beta > 0.0)) throw ConfigError("mixup beta must be > 0, got " + std::to_string(beta));
  if (split.train.empty()) throw ConfigError("cannot synthesize from an empty train set");
  const auto classes = static_cast<std::size_t>(g.class_count());
  std::vector<std::vector<std::int64_t>> members(classes);
  std::vector<std::int64_t> counts(classes, 0);
  for (auto v : split.train) {
    const auto c = static_cast<std::size_t>(g.label(v));
    ++counts[c];
    if (anchor_mask == nullptr || (*anchor_mask)[static_cast<std::size_t>(v)]) members[c].push_back(v);
  }
  const std::int64_t majority = *std::max_element(counts.begin(), counts.end());

  SynthesisPlan plan;
  plan.base_nodes = g.num_nodes();
  std::uniform_int_distribution<std::size_t> pick_target(0, split.train.size() - 1);
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) continue;
    const std::int64_t deficit = majority - counts[c];
    if (deficit == 0) continue;
    if (members[c].empty()) {
      throw ConfigError("class " + std::to_string(c) + " has no eligible anchor node");
    }
    std::uniform_int_distribution<std::size_t> pick_anchor(0, members[c].size() - 1);
    for (std::int64_t k = 0; k < deficit; ++k) {
      SynthesisRecord r;
      r.anchor = members[c][pick_anchor(rng)];
      r.target = split.train[pick_target(rng)];
      const double p = sample_beta(rng, beta, beta);
      r.mix_ratio = std::max(p, 1.0 - p);
      r.new_class = static_cast<int>(c);
      r.new_node_id = plan.base_nodes + static_cast<std::int64_t>(plan.records.size());
      plan.records.push_back(std::move(r));
    }
  }
  return plan;
}

Matrix mix_features(const Matrix& x, const SynthesisPlan& plan) {
  Matrix out(static_cast<Eigen::Index>(plan.records.size()), x.cols());
  for (std::size_t i = 0; i < plan.records.size(); ++i) {
    const auto& r = plan.records[i];
    if (r.anchor < 0 || r.anchor >= x.rows() || r.target < 0 || r.target >= x.rows()) {
      throw ShapeError("mix_features: record " + std::to_string(i) + " indexes outside the matrix");
    }
    out.row(static_cast<Eigen::Index>(i)) =
        r.mix_ratio * x.row(r.anchor) + (1.0 - r.mix_ratio) * x.row(r.target);
  }
  return out;
}

SparseMatrix mixing_operator(const SynthesisPlan& plan) {
  const std::int64_t n = plan.base_nodes;
  const auto q = static_cast<std::int64_t>(plan.records.size());
  std::vector<std::int64_t> offsets;
  std::vector<std::int64_t> cols;
  std::vector<double> values;
  offsets.reserve(static_cast<std::size_t>(n + q + 1));
  offsets.push_back(0);
  for (std::int64_t v = 0; v < n; ++v) {
    cols.push_back(v);
    values.push_back(1.0);
    offsets.push_back(static_cast<std::int64_t>(cols.size()));
  }
  for (const auto& r : plan.records) {
    const double p = r.mix_ratio;
    if (r.anchor == r.target) {
      cols.push_back(r.anchor);
      values.push_back(1.0);
    } else {
      const bool anchor_first = r.anchor < r.target;
      cols.push_back(anchor_first ? r.anchor : r.target);
      values.push_back(anchor_first ? p : 1.0 - p);
      cols.push_back(anchor_first ? r.target : r.anchor);
      values.push_back(anchor_first ? 1.0 - p : p);
    }
    offsets.push_back(static_cast<std::int64_t>(cols.size()));
  }
  // Drop explicit zeros (p == 1) so the pattern matches from_dense.
  std::vector<std::int64_t> o2{0};
  std::vector<std::int64_t> c2;
  std::vector<double> v2;
  for (std::size_t row = 0; row + 1 < offsets.size(); ++row) {
    for (auto k = offsets[row]; k < offsets[row + 1]; ++k) {
      if (values[static_cast<std::size_t>(k)] != 0.0) {
        c2.push_back(cols[static_cast<std::size_t>(k)]);
        v2.push_back(values[static_cast<std::size_t>(k)]);
      }
    }
    o2.push_back(static_cast<std::int64_t>(c2.size()));
  }
  return SparseMatrix(n + q, n, std::move(o2), std::move(c2), std::move(v2));
}

namespace {

NeighborDistribution normalized(const std::map<std::int64_t, double>& mass) {
  NeighborDistribution d;
  double total = 0.0;
  for (const auto& [u, m] : mass) {
    if (m > 0.0) total += m;
  }
  if (!(total > 0.0)) return d;
  for (const auto& [u, m] : mass) {
    if (m <= 0.0) continue;
    d.candidates.push_back(u);
    d.probabilities.push_back(m / total);
  }
  return d;
}

NeighborDistribution uniform_over(std::span<const std::int64_t> nodes) {
  std::map<std::int64_t, double> mass;
  for (auto u : nodes) mass[u] += 1.0;
  return normalized(mass);
}

}  // namespace

NeighborDistribution neighbor_distribution(const SynthesisRecord& record, const Graph& g,
                                           const NldStats& nld, int epoch, int warmup) {
  if (epoch < warmup) {
    NeighborDistribution d = uniform_over(g.neighbors(record.anchor));
    if (d.candidates.empty()) {
      throw DataError("anchor " + std::to_string(record.anchor) +
                      " has no neighbors to duplicate during warm-up");
    }
    return d;
  }
  std::map<std::int64_t, double> base;
  for (auto u : g.neighbors(record.anchor)) base[u] += record.mix_ratio;
  for (auto u : g.neighbors(record.target)) base[u] += 1.0 - record.mix_ratio;
  std::map<std::int64_t, double> weighted;
  for (const auto& [u, m] : base) {
    weighted[u] = m * nld.weight[static_cast<std::size_t>(g.label(u))];
  }
  NeighborDistribution d = normalized(weighted);
  if (d.candidates.empty()) d = normalized(base);
  if (d.candidates.empty()) {
    throw DataError("synthesized node from anchor " + std::to_string(record.anchor) + " and target " +
                    std::to_string(record.target) + " has an empty neighbor distribution");
  }
  return d;
}

NeighborDistribution resolve_neighbor_distribution(const SynthesisRecord& record, const Graph& g,
                                                   const NldStats& nld, int epoch, int warmup) {
  try {
    return neighbor_distribution(record, g, nld, epoch, warmup);
  } catch (const DataError&) {
  }
  NeighborDistribution d = uniform_over(g.neighbors(record.target));
  if (!d.candidates.empty()) return d;
  const std::int64_t parents[2] = {record.anchor, record.target};
  return uniform_over(std::span<const std::int64_t>(parents, record.anchor == record.target ? 1 : 2));
}

std::vector<std::vector<std::int64_t>> train_degrees_by_class(const Graph& g,
                                                              const ImbalancedSplit& split) {
  std::vector<std::vector<std::int64_t>> out(static_cast<std::size_t>(g.class_count()));
  for (auto v : split.train) out[static_cast<std::size_t>(g.label(v))].push_back(g.degree(v));
  return out;
}

std::vector<std::int64_t> sample_degree_and_neighbors(const NeighborDistribution& dist,
                                                      const std::vector<std::int64_t>& class_degrees,
                                                      Rng& rng) {
  if (dist.candidates.empty()) throw DataError("cannot sample neighbors from an empty distribution");
  std::int64_t degree = 1;
  if (!class_degrees.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, class_degrees.size() - 1);
    degree = std::max<std::int64_t>(1, class_degrees[pick(rng)]);
  }
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(degree), dist.candidates.size());
  std::vector<double> mass = dist.probabilities;
  std::vector<std::int64_t> chosen;
  chosen.reserve(k);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t draw = 0; draw < k; ++draw) {
    double total = 0.0;
    for (double m : mass) total += m;
    const double u = unit(rng) * total;
    double acc = 0.0;
    std::size_t pick = mass.size();
    std::size_t last_positive = mass.size();
    for (std::size_t i = 0; i < mass.size(); ++i) {
      if (mass[i] <= 0.0) continue;
      last_positive = i;
      acc += mass[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    if (pick == mass.size()) pick = last_positive;
    chosen.push_back(dist.candidates[pick]);
    mass[pick] = 0.0;
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<char> light_filter(const Graph& g, const ImbalancedSplit& split, const NldStats& nld,
                               double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("light-mode epsilon must lie in [0, 1], got " + std::to_string(epsilon));
  }
  std::vector<char> mask(static_cast<std::size_t>(g.num_nodes()));
  for (std::size_t v = 0; v < mask.size(); ++v) mask[v] = nld.same_label[v] >= epsilon ? 1 : 0;
  std::vector<std::int64_t> kept(static_cast<std::size_t>(g.class_count()), 0);
  std::vector<std::int64_t> total(kept.size(), 0);
  for (auto v : split.train) {
    const auto c = static_cast<std::size_t>(g.label(v));
    ++total[c];
    if (mask[static_cast<std::size_t>(v)]) ++kept[c];
  }
  for (std::size_t c = 0; c < kept.size(); ++c) {
    if (total[c] > 0 && kept[c] == 0) {
      throw ConfigError("light filter with epsilon " + std::to_string(epsilon) +
                        " removes every train node of class " + std::to_string(c));
    }
  }
  return mask;
}

void wire_neighbors(SynthesisPlan& plan, const Graph& g, const ImbalancedSplit& split,
                    const NldStats& nld, int epoch, int warmup, Rng& rng) {
  const auto degrees = train_degrees_by_class(g, split);
  for (auto& r : plan.records) {
    const NeighborDistribution d = resolve_neighbor_distribution(r, g, nld, epoch, warmup);
    r.neighbors = sample_degree_and_neighbors(d, degrees[static_cast<std::size_t>(r.new_class)], rng);
  }
}

namespace {

BalancedGraph append_synthesized(const Graph& g, const ImbalancedSplit& split,
                                 const SynthesisPlan& plan, Matrix x) {
  std::vector<int> labels = g.labels();
  std::vector<Edge> edges = g.edge_list();
  BalancedGraph out;
  out.split = split;
  for (const auto& r : plan.records) {
    labels.push_back(r.new_class);
    for (auto u : r.neighbors) edges.emplace_back(u, r.new_node_id);
    out.split.train.push_back(r.new_node_id);
    ++out.split.train_counts[static_cast<std::size_t>(r.new_class)];
  }
  out.split.rho = achieved_rho(out.split.train_counts);
  out.graph = Graph(std::move(x), std::move(labels), edges, g.class_count());
  return out;
}

}  // namespace

BalancedGraph build_balanced_graph(const Graph& g, const ImbalancedSplit& split,
                                   const SynthesisPlan& plan, const Matrix& mixed) {
  const auto q = static_cast<std::int64_t>(plan.records.size());
  if (mixed.rows() != q || (q > 0 && mixed.cols() != g.feature_dim())) {
    throw ShapeError("build_balanced_graph: mixed features " + shape_string(mixed.rows(), mixed.cols()) +
                     " for " + std::to_string(q) + " records");
  }
  const std::int64_t n = g.num_nodes();
  Matrix x(n + q, g.feature_dim());
  x.topRows(n) = g.features();
  if (q > 0) x.bottomRows(q) = mixed;
  return append_synthesized(g, split, plan, std::move(x));
}

BalancedGraph build_balanced_topology(const Graph& g, const ImbalancedSplit& split,
                                      const SynthesisPlan& plan) {
  const auto rows = g.num_nodes() + static_cast<std::int64_t>(plan.records.size());
  return append_synthesized(g, split, plan, Matrix(rows, 0));
}

nlohmann::json plan_to_json(const SynthesisPlan& plan) {
  nlohmann::json j;
  j["base_nodes"] = plan.base_nodes;
  auto records = nlohmann::json::array();
  for (const auto& r : plan.records) {
    nlohmann::json o;
    o["new_node_id"] = r.new_node_id;
    o["new_class"] = r.new_class;
    o["anchor"] = r.anchor;
    o["target"] = r.target;
    o["p"] = r.mix_ratio;
    o["neighbors"] = r.neighbors;
    records.push_back(std::move(o));
  }
  j["records"] = std::move(records);
  return j;
}

}  // namespace graphife
