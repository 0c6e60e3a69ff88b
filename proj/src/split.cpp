#include "graphife/split.hpp"

#include "graphife/error.hpp"
#include "graphife/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace graphife {

namespace {

std::vector<std::int64_t> population_of(const Graph& g) {
  std::vector<std::int64_t> pop(static_cast<std::size_t>(g.class_count()), 0);
  for (int y : g.labels()) ++pop[static_cast<std::size_t>(y)];
  return pop;
}

// Class ids by descending population; ties keep the lower id first.
std::vector<int> rank_classes(const std::vector<std::int64_t>& population) {
  std::vector<int> order(population.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return population[static_cast<std::size_t>(a)] > population[static_cast<std::size_t>(b)];
  });
  return order;
}

void check_rho(double rho) {
  if (!(rho >= 1.0) || !std::isfinite(rho)) {
    throw ConfigError("imbalance ratio must be >= 1, got " + std::to_string(rho));
  }
}

// Index of the first class that cannot cover train + val + test, or -1.
int infeasible_class(const std::vector<std::int64_t>& population,
                     const std::vector<std::int64_t>& counts, std::int64_t val,
                     std::int64_t test) {
  const std::int64_t test_need = test > 0 ? test : 1;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (population[c] == 0) continue;
    if (counts[c] + val + test_need > population[c]) return static_cast<int>(c);
  }
  return -1;
}

template <typename CountFn>
ImbalancedSplit build_split(const Graph& g, const char* kind, double rho, std::int64_t head,
                            std::int64_t val, std::int64_t test, std::uint64_t seed,
                            CountFn counts_for) {
  check_rho(rho);
  if (head < 1) throw ConfigError(std::string(kind) + " split needs a head size >= 1");
  if (val < 0) throw ConfigError("val_per_class must be >= 0");
  const auto population = population_of(g);

  std::vector<std::int64_t> counts = counts_for(population, rho, head);
  while (infeasible_class(population, counts, val, test) >= 0 && head > 1) {
    --head;
    counts = counts_for(population, rho, head);
  }
  if (int c = infeasible_class(population, counts, val, test); c >= 0) {
    throw ConfigError("class " + std::to_string(c) + " has " +
                      std::to_string(population[static_cast<std::size_t>(c)]) +
                      " nodes, too few for its train/val/test quota");
  }

  ImbalancedSplit split;
  split.kind = kind;
  split.requested_rho = rho;
  split.seed = seed;
  split.head_count = head;
  split.train_counts = counts;
  Rng rng = derive_rng(seed, 0, "split");
  auto by_class = g.nodes_by_class();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& nodes = by_class[c];
    if (nodes.empty()) {
      split.train_counts[c] = 0;
      continue;
    }
    std::shuffle(nodes.begin(), nodes.end(), rng);
    const auto n_train = static_cast<std::size_t>(counts[c]);
    const auto n_val = static_cast<std::size_t>(val);
    const std::size_t n_test =
        test > 0 ? static_cast<std::size_t>(test) : nodes.size() - n_train - n_val;
    auto it = nodes.begin();
    split.train.insert(split.train.end(), it, it + static_cast<std::ptrdiff_t>(n_train));
    it += static_cast<std::ptrdiff_t>(n_train);
    split.val.insert(split.val.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
    it += static_cast<std::ptrdiff_t>(n_val);
    split.test.insert(split.test.end(), it, it + static_cast<std::ptrdiff_t>(n_test));
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  split.rho = achieved_rho(split.train_counts);
  return split;
}

}  // namespace

std::vector<int> ImbalancedSplit::train_labels(const Graph& g) const {
  std::vector<int> out;
  out.reserve(train.size());
  for (auto v : train) out.push_back(g.label(v));
  return out;
}

double achieved_rho(const std::vector<std::int64_t>& train_counts) {
  std::int64_t hi = 0;
  std::int64_t lo = 0;
  for (auto c : train_counts) {
    if (c <= 0) continue;
    hi = std::max(hi, c);
    lo = lo == 0 ? c : std::min(lo, c);
  }
  return lo == 0 ? 1.0 : static_cast<double>(hi) / static_cast<double>(lo);
}

std::vector<std::int64_t> longtail_counts(const std::vector<std::int64_t>& population,
                                          double rho, std::int64_t n_max) {
  check_rho(rho);
  const auto order = rank_classes(population);
  const std::size_t c_count = order.size();
  std::vector<std::int64_t> counts(c_count, 0);
  for (std::size_t k = 0; k < c_count; ++k) {
    const double exponent =
        c_count > 1 ? -static_cast<double>(k) / static_cast<double>(c_count - 1) : 0.0;
    const auto n = static_cast<std::int64_t>(
        std::llround(static_cast<double>(n_max) * std::pow(rho, exponent)));
    counts[static_cast<std::size_t>(order[k])] = std::max<std::int64_t>(1, n);
  }
  return counts;
}

std::vector<std::int64_t> step_counts(const std::vector<std::int64_t>& population, double rho,
                                      std::int64_t n_head) {
  check_rho(rho);
  const auto order = rank_classes(population);
  const std::size_t heads = (order.size() + 1) / 2;
  const auto tail = std::max<std::int64_t>(
      1, std::llround(static_cast<double>(n_head) / rho));
  std::vector<std::int64_t> counts(order.size(), 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    counts[static_cast<std::size_t>(order[k])] = k < heads ? n_head : tail;
  }
  return counts;
}

ImbalancedSplit make_longtail_split(const Graph& g, double rho, std::int64_t n_max,
                                    std::int64_t val_per_class, std::int64_t test_per_class,
                                    std::uint64_t seed) {
  return build_split(g, "longtail", rho, n_max, val_per_class, test_per_class, seed,
                     longtail_counts);
}

ImbalancedSplit make_step_split(const Graph& g, double rho, std::int64_t n_head,
                                std::int64_t val_per_class, std::int64_t test_per_class,
                                std::uint64_t seed) {
  return build_split(g, "step", rho, n_head, val_per_class, test_per_class, seed, step_counts);
}

void save_split(const ImbalancedSplit& split, const std::string& path) {
  nlohmann::ordered_json j;
  j["kind"] = split.kind;
  j["seed"] = split.seed;
  j["requested_rho"] = split.requested_rho;
  j["rho"] = split.rho;
  j["head_count"] = split.head_count;
  j["train_counts"] = split.train_counts;
  j["train"] = split.train;
  j["val"] = split.val;
  j["test"] = split.test;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split file " + path);
  out << j.dump(2) << '\n';
}

ImbalancedSplit load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path);
  ImbalancedSplit s;
  try {
    nlohmann::json j;
    in >> j;
    s.kind = j.at("kind").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.requested_rho = j.at("requested_rho").get<double>();
    s.rho = j.at("rho").get<double>();
    s.head_count = j.at("head_count").get<std::int64_t>();
    s.train_counts = j.at("train_counts").get<std::vector<std::int64_t>>();
    s.train = j.at("train").get<std::vector<std::int64_t>>();
    s.val = j.at("val").get<std::vector<std::int64_t>>();
    s.test = j.at("test").get<std::vector<std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed split: " + e.what());
  }
  std::set<std::int64_t> seen;
  for (const auto* set : {&s.train, &s.val, &s.test}) {
    for (auto v : *set) {
      if (v < 0 || !seen.insert(v).second) {
        throw DataError(path + ": node " + std::to_string(v) + " is invalid or in two sets");
      }
    }
  }
  const auto total = std::accumulate(s.train_counts.begin(), s.train_counts.end(),
                                     std::int64_t{0});
  if (total != static_cast<std::int64_t>(s.train.size())) {
    throw DataError(path + ": train_counts do not sum to the train set size");
  }
  if (achieved_rho(s.train_counts) != s.rho) {
    throw DataError(path + ": stored rho does not match train_counts");
  }
  return s;
}

}  // namespace graphife
