#pragma once

#include "graphife/graph.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace graphife {

/// Train/val/test partition with a controlled per-class training imbalance.
struct ImbalancedSplit {
  std::string kind;  ///< "longtail" or "step"
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> val;
  std::vector<std::int64_t> test;
  std::vector<std::int64_t> train_counts;  ///< per class
  double requested_rho = 1.0;
  /// max/min train count over classes with at least one train node.
  double rho = 1.0;
  /// Largest per-class train quota actually used (n_max or n_head after any lowering).
  std::int64_t head_count = 0;
  std::uint64_t seed = 0;

  /// Label of each train node, in `train` order.
  std::vector<int> train_labels(const Graph& g) const;
};

/// rho recomputed from per-class counts.
double achieved_rho(const std::vector<std::int64_t>& train_counts);

/// Per-class train quota at head size `n_max`: classes ranked by descending population get
/// round(n_max * rho^{-k/(C-1)}), floored at 1. Indexed by class.
std::vector<std::int64_t> longtail_counts(const std::vector<std::int64_t>& population,
                                          double rho, std::int64_t n_max);
/// The ceil(C/2) most populous classes get n_head; the rest max(1, round(n_head/rho)).
std::vector<std::int64_t> step_counts(const std::vector<std::int64_t>& population, double rho,
                                      std::int64_t n_head);

/// `test_per_class` <= 0 puts every node left after train and val into the test set.
/// If a class cannot cover its quota, the head size is lowered to the largest feasible value.
ImbalancedSplit make_longtail_split(const Graph& g, double rho, std::int64_t n_max,
                                    std::int64_t val_per_class, std::int64_t test_per_class,
                                    std::uint64_t seed);
ImbalancedSplit make_step_split(const Graph& g, double rho, std::int64_t n_head,
                                std::int64_t val_per_class, std::int64_t test_per_class,
                                std::uint64_t seed);

void save_split(const ImbalancedSplit& split, const std::string& path);
ImbalancedSplit load_split(const std::string& path);

}  // namespace graphife
