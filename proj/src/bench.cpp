#include "graphife/bench.hpp"

#include "graphife/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace graphife {

ImbalancedSplit make_split(const Graph& g, const SplitSpec& spec, std::uint64_t seed) {
  if (spec.kind == "longtail" || spec.kind == "lt") {
    return make_longtail_split(g, spec.rho, spec.head, spec.val_per_class, spec.test_per_class, seed);
  }
  if (spec.kind == "step") {
    return make_step_split(g, spec.rho, spec.head, spec.val_per_class, spec.test_per_class, seed);
  }
  throw ConfigError("unknown split setting '" + spec.kind + "' (expected longtail or step)");
}

nlohmann::json split_spec_to_json(const SplitSpec& s) {
  return {{"setting", s.kind},
          {"rho", s.rho},
          {"head", s.head},
          {"val_per_class", s.val_per_class},
          {"test_per_class", s.test_per_class}};
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

SeedRun run_seed(const Graph& g, const SplitSpec& spec, TrainConfig config, std::uint64_t seed) {
  config.seed = seed;
  const ImbalancedSplit split = make_split(g, spec, seed);
  const FitResult fitted = fit(g, split, config);
  SeedRun run;
  run.seed = seed;
  run.test = evaluate(fitted, g, split.test, config);
  run.best_epoch = fitted.best_epoch;
  run.best_val_bacc = fitted.best_val_bacc;
  run.achieved_rho = split.rho;
  return run;
}

int workers_from_env() {
  const char* raw = std::getenv("GRAPHIFE_NUM_WORKERS");
  if (raw == nullptr || *raw == '\0') return 1;
  int n = 0;
  const auto end = raw + std::char_traits<char>::length(raw);
  const auto res = std::from_chars(raw, end, n);
  if (res.ec != std::errc() || res.ptr != end || n < 1) {
    throw ConfigError(std::string("GRAPHIFE_NUM_WORKERS must be a positive integer, got '") + raw + "'");
  }
  return n;
}

namespace {

[[noreturn]] void rethrow_with_seed(const std::exception_ptr& error, std::uint64_t seed) {
  const std::string prefix = "seed " + std::to_string(seed) + ": ";
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(prefix + e.what());
  } catch (const TapeError& e) {
    throw TapeError(prefix + e.what());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

ExperimentResult run_experiment(const Graph& g, const SplitSpec& spec, const TrainConfig& config,
                                std::span<const std::uint64_t> seeds, int workers) {
  config.validate();
  if (seeds.empty()) throw ConfigError("run_experiment needs at least one seed");
  std::vector<std::uint64_t> order(seeds.begin(), seeds.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end()) {
    throw ConfigError("run_experiment: repeated seed");
  }

  std::vector<SeedRun> runs(order.size());
  std::vector<std::exception_ptr> errors(order.size());
  auto work = [&](std::size_t i) {
    try {
      runs[i] = run_seed(g, spec, config, order[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const auto lanes = static_cast<std::size_t>(std::max(1, workers));
  if (lanes == 1) {
    for (std::size_t i = 0; i < order.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t lane = 0; lane < std::min(lanes, order.size()); ++lane) {
      pool.emplace_back([&, lane] {
        for (std::size_t i = lane; i < order.size(); i += lanes) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (errors[i]) rethrow_with_seed(errors[i], order[i]);
  }

  ExperimentResult r;
  r.method = method_name(config.method);
  r.rho = spec.rho;
  r.runs = std::move(runs);
  std::vector<double> acc;
  std::vector<double> bacc;
  std::vector<double> f1;
  for (const auto& run : r.runs) {
    acc.push_back(run.test.accuracy);
    bacc.push_back(run.test.balanced_accuracy);
    f1.push_back(run.test.macro_f1);
  }
  r.acc = summarize(acc);
  r.bacc = summarize(bacc);
  r.f1 = summarize(f1);
  return r;
}

std::vector<ExperimentResult> rho_sweep(const Graph& g, const SplitSpec& spec,
                                        std::span<const double> rhos,
                                        std::span<const Method> methods, const TrainConfig& config,
                                        std::span<const std::uint64_t> seeds, int workers) {
  if (rhos.empty()) throw ConfigError("rho_sweep needs at least one rho");
  if (methods.empty()) throw ConfigError("rho_sweep needs at least one method");
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    if (!(rhos[i] >= 1.0)) throw ConfigError("rho_sweep: rho must be >= 1");
    if (i > 0 && !(rhos[i] > rhos[i - 1])) throw ConfigError("rho_sweep: rhos must be strictly ascending");
  }
  std::vector<ExperimentResult> out;
  for (double rho : rhos) {
    SplitSpec s = spec;
    s.rho = rho;
    for (Method m : methods) {
      TrainConfig c = config;
      c.method = m;
      out.push_back(run_experiment(g, s, c, seeds, workers));
    }
  }
  return out;
}

namespace {

void put(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

struct Metric {
  const char* name;
  MetricSummary ExperimentResult::*field;
};

constexpr Metric kMetrics[] = {
    {"acc", &ExperimentResult::acc}, {"bacc", &ExperimentResult::bacc}, {"f1", &ExperimentResult::f1}};

std::string seed_list(const ExperimentResult& r) {
  std::string out;
  for (const auto& run : r.runs) {
    if (!out.empty()) out += ';';
    out += std::to_string(run.seed);
  }
  return out;
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("results.csv: bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

std::string sweep_csv(const std::vector<ExperimentResult>& results) {
  std::string out = "rho,method,metric,mean,std\n";
  for (const auto& r : results) {
    for (const auto& m : kMetrics) {
      put(out, r.rho);
      out += ',';
      out += r.method;
      out += ',';
      out += m.name;
      out += ',';
      put(out, (r.*m.field).mean);
      out += ',';
      put(out, (r.*m.field).std);
      out += '\n';
    }
  }
  return out;
}

std::vector<ResultRow> result_rows(const std::vector<ExperimentResult>& results) {
  std::vector<ResultRow> rows;
  for (const auto& r : results) {
    std::vector<std::uint64_t> seeds;
    for (const auto& run : r.runs) seeds.push_back(run.seed);
    for (const auto& m : kMetrics) {
      rows.push_back({r.method, r.rho, m.name, (r.*m.field).mean, (r.*m.field).std, seeds});
    }
  }
  return rows;
}

std::string results_csv(const std::vector<ExperimentResult>& results) {
  std::string out = "method,rho,metric,mean,std,seeds\n";
  for (const auto& r : results) {
    for (const auto& m : kMetrics) {
      out += r.method;
      out += ',';
      put(out, r.rho);
      out += ',';
      out += m.name;
      out += ',';
      put(out, (r.*m.field).mean);
      out += ',';
      put(out, (r.*m.field).std);
      out += ',';
      out += seed_list(r);
      out += '\n';
    }
  }
  return out;
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "method,rho,metric,mean,std,seeds") {
    throw DataError("results.csv: missing or unexpected header");
  }
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw DataError("results.csv: expected 6 cells in '" + line + "'");
    ResultRow r;
    r.method = cells[0];
    r.rho = parse_double(cells[1], "rho");
    r.metric = cells[2];
    r.mean = parse_double(cells[3], "mean");
    r.std = parse_double(cells[4], "std");
    std::stringstream seeds(cells[5]);
    while (std::getline(seeds, cell, ';')) r.seeds.push_back(std::stoull(cell));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string report_markdown(const std::vector<ExperimentResult>& results, const nlohmann::json& config) {
  std::string out = "| Method | rho | Acc. | bAcc. | F1 | Seeds |\n|---|---|---|---|---|---|\n";
  char buf[64];
  for (const auto& r : results) {
    out += "| " + r.method + " | ";
    put(out, r.rho);
    for (const auto& m : kMetrics) {
      std::snprintf(buf, sizeof(buf), " | %.2f ± %.2f", 100.0 * (r.*m.field).mean, 100.0 * (r.*m.field).std);
      out += buf;
    }
    out += " | " + std::to_string(r.runs.size()) + " |\n";
  }
  if (!config.is_null()) out += "\nConfig:\n\n```json\n" + config.dump(2) + "\n```\n";
  return out;
}

void emit_report(const std::vector<ExperimentResult>& results, const std::string& dir,
                 const nlohmann::json& config) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& body) {
    const auto path = (std::filesystem::path(dir) / name).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f << body;
    if (!f) throw DataError("write failed for " + path);
  };
  write("results.csv", results_csv(results));
  write("report.md", report_markdown(results, config));
}

FiDiagnostic fi_diagnostic(const Graph& g, const ImbalancedSplit& split, double beta,
                           std::uint64_t seed, int bins) {
  Rng rng = derive_rng(seed, 0, "fi-synthesis");
  const SynthesisPlan plan = plan_synthesis(g, split, beta, rng);
  if (plan.records.empty()) throw DataError("fi_diagnostic: the split is balanced, nothing to synthesize");
  const auto top = *std::max_element(split.train_counts.begin(), split.train_counts.end());
  std::vector<std::int64_t> pool;
  for (std::int64_t v = 0; v < g.num_nodes(); ++v) {
    const auto c = static_cast<std::size_t>(g.label(v));
    if (c < split.train_counts.size() && split.train_counts[c] > 0 && split.train_counts[c] < top) pool.push_back(v);
  }
  if (pool.size() < 2) throw DataError("fi_diagnostic: fewer than two minority-class nodes");
  auto rows = [&](std::span<const std::int64_t> ids) {
    Matrix m(static_cast<Eigen::Index>(ids.size()), g.feature_dim());
    for (std::size_t i = 0; i < ids.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = g.features().row(ids[i]);
    return m;
  };
  FiDiagnostic d;
  const Matrix originals = rows(pool);
  const Matrix batch = mix_features(g.features(), plan);
  d.synthesized = feature_inconsistency(batch, originals, bins);
  Rng shuffle = derive_rng(seed, 0, "fi-bootstrap");
  std::shuffle(pool.begin(), pool.end(), shuffle);
  const std::span<const std::int64_t> all(pool);
  const auto half = pool.size() / 2;
  d.bootstrap = feature_inconsistency(rows(all.first(half)), rows(all.subspan(half)), bins);
  d.originals = static_cast<std::int64_t>(pool.size());
  d.synthesized_count = batch.rows();
  return d;
}

}  // namespace graphife
