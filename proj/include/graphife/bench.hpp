#pragma once

#include "graphife/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace graphife {

/// How a run's imbalanced split is drawn. The split seed is the run seed.
struct SplitSpec {
  std::string kind = "longtail";  ///< "longtail" or "step"
  double rho = 100.0;
  std::int64_t head = 100;        ///< n_max (longtail) or n_head (step)
  std::int64_t val_per_class = 25;
  std::int64_t test_per_class = 0;  ///< <= 0: every remaining node
};

ImbalancedSplit make_split(const Graph& g, const SplitSpec& spec, std::uint64_t seed);

nlohmann::json split_spec_to_json(const SplitSpec& s);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation; 0 for a single seed
};

/// Mean and sample std of `values`.
MetricSummary summarize(std::span<const double> values);

struct SeedRun {
  std::uint64_t seed = 0;
  ClassificationMetrics test;
  int best_epoch = -1;
  double best_val_bacc = 0.0;
  double achieved_rho = 1.0;
};

struct ExperimentResult {
  std::string method;
  double rho = 0.0;
  std::vector<SeedRun> runs;  ///< ascending seed
  MetricSummary acc;
  MetricSummary bacc;
  MetricSummary f1;
};

/// One seed: split, fit, evaluate on the test set.
SeedRun run_seed(const Graph& g, const SplitSpec& spec, TrainConfig config, std::uint64_t seed);

/// GRAPHIFE_NUM_WORKERS, default 1, at least 1.
int workers_from_env();

/// Runs every seed (up to `workers` at a time, each on its own thread with nothing shared but the
/// read-only graph) and aggregates in seed order. Errors carry the failing seed.
ExperimentResult run_experiment(const Graph& g, const SplitSpec& spec, const TrainConfig& config,
                                std::span<const std::uint64_t> seeds, int workers = 1);

/// Every (rho, method) cell of the grid, rho-major. `rhos` must be non-empty and ascending.
std::vector<ExperimentResult> rho_sweep(const Graph& g, const SplitSpec& spec,
                                        std::span<const double> rhos,
                                        std::span<const Method> methods, const TrainConfig& config,
                                        std::span<const std::uint64_t> seeds, int workers = 1);

/// `rho,method,metric,mean,std` with metrics acc, bacc, f1.
std::string sweep_csv(const std::vector<ExperimentResult>& results);

/// One metric row of results.csv.
struct ResultRow {
  std::string method;
  double rho = 0.0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::uint64_t> seeds;

  bool operator==(const ResultRow&) const = default;
};

std::vector<ResultRow> result_rows(const std::vector<ExperimentResult>& results);
std::string results_csv(const std::vector<ExperimentResult>& results);
std::vector<ResultRow> parse_results_csv(const std::string& text);

/// Markdown table, one row per result, metrics as percentage mean ± std; `config` is echoed
/// below the table when not null.
std::string report_markdown(const std::vector<ExperimentResult>& results,
                            const nlohmann::json& config = nullptr);

/// Writes `dir`/results.csv and `dir`/report.md (creating `dir`). DataError if unwritable.
void emit_report(const std::vector<ExperimentResult>& results, const std::string& dir,
                 const nlohmann::json& config = nullptr);

/// Feature inconsistency of mixup against the originals of the minority classes.
struct FiDiagnostic {
  double synthesized = 0.0;  ///< FI(minority originals, synthesized batch)
  double bootstrap = 0.0;    ///< FI(random half A, half B) of the same originals
  std::int64_t originals = 0;
  std::int64_t synthesized_count = 0;
};

/// Minority classes are those below the largest train count. The batch is one synthesis plan on
/// `split`; the bootstrap halves come from a shuffle of the originals. Both draws use `seed`.
FiDiagnostic fi_diagnostic(const Graph& g, const ImbalancedSplit& split, double beta,
                           std::uint64_t seed, int bins = 32);

}  // namespace graphife
