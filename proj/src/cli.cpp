#include "graphife/cli.hpp"

#include "graphife/bench.hpp"
#include "graphife/checkpoint.hpp"
#include "graphife/error.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>

namespace graphife {
namespace {

struct DataArgs {
  std::string content;
  std::string cites;
  std::string graph_json;
};

struct SplitArgs {
  std::string split_file;
  SplitSpec spec;
};

// Flag values start at the defaults; only flags given on the command line override the config file.
struct TrainArgs {
  std::string config_file;
  std::string method;
  std::string backbone;
  TrainConfig values;
  std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> overrides;
};

void add_data_flags(CLI::App& cmd, DataArgs& d) {
  cmd.add_option("--content", d.content, "node file: <id> <features...> <label>");
  cmd.add_option("--cites", d.cites, "edge file: <id> <id> per line");
  cmd.add_option("--graph", d.graph_json, "graph JSON (alternative to --content/--cites)");
}

void add_split_flags(CLI::App& cmd, SplitArgs& s, bool allow_file) {
  if (allow_file) cmd.add_option("--split", s.split_file, "split JSON written by prepare (overrides the split flags)");
  cmd.add_option("--setting", s.spec.kind, "imbalance setting: lt/longtail or step")->capture_default_str();
  cmd.add_option("--rho", s.spec.rho, "imbalance ratio")->capture_default_str();
  cmd.add_option("--head", s.spec.head, "train nodes of the largest class")->capture_default_str();
  cmd.add_option("--val-per-class", s.spec.val_per_class, "validation nodes per class")->capture_default_str();
  cmd.add_option("--test-per-class", s.spec.test_per_class, "test nodes per class; 0 = all remaining")
      ->capture_default_str();
}

template <typename T>
void add_override(CLI::App& cmd, TrainArgs& t, const std::string& flag, T& slot, T TrainConfig::*field,
                  const std::string& help) {
  CLI::Option* opt = cmd.add_option(flag, slot, help)->capture_default_str();
  t.overrides.emplace_back(opt, [&slot, field](TrainConfig& c) { c.*field = slot; });
}

void add_train_flags(CLI::App& cmd, TrainArgs& t, bool with_method) {
  TrainConfig& v = t.values;
  t.method = method_name(v.method);
  t.backbone = layer_kind_name(v.backbone);
  cmd.add_option("--config", t.config_file, "JSON config; keys mirror the long flag names");
  if (with_method) {
    CLI::Option* m = cmd.add_option("--method", t.method, "vanilla, reweight, upsample, graphife, graphife-light")
                         ->capture_default_str();
    t.overrides.emplace_back(m, [&t](TrainConfig& c) { c.method = parse_method(t.method); });
  }
  CLI::Option* b = cmd.add_option("--backbone", t.backbone, "gcn or sage")->capture_default_str();
  t.overrides.emplace_back(b, [&t](TrainConfig& c) { c.backbone = parse_layer_kind(t.backbone); });
  add_override(cmd, t, "--hidden", v.hidden, &TrainConfig::hidden, "hidden width");
  add_override(cmd, t, "--epochs", v.epochs, &TrainConfig::epochs, "training epochs");
  add_override(cmd, t, "--r1", v.lr_ife, &TrainConfig::lr_ife, "learning rate of the invariant side");
  add_override(cmd, t, "--r2", v.lr_efe, &TrainConfig::lr_efe, "learning rate of the environment side");
  add_override(cmd, t, "--lr-baseline", v.lr_baseline, &TrainConfig::lr_baseline, "learning rate of the baselines");
  add_override(cmd, t, "--weight-decay", v.weight_decay, &TrainConfig::weight_decay, "L2 weight decay");
  add_override(cmd, t, "--d", v.distance_ratio, &TrainConfig::distance_ratio, "distance ratio");
  add_override(cmd, t, "--alpha", v.alpha, &TrainConfig::alpha, "gate regulation ratio");
  add_override(cmd, t, "--t", v.dwa_temperature, &TrainConfig::dwa_temperature, "DWA temperature");
  add_override(cmd, t, "--omega", v.warmup, &TrainConfig::warmup, "warm-up epochs");
  add_override(cmd, t, "--beta", v.beta, &TrainConfig::beta, "mixup Beta parameter");
  add_override(cmd, t, "--epsilon", v.light_epsilon, &TrainConfig::light_epsilon, "Light-mode filter threshold");
  add_override(cmd, t, "--env-loss-floor", v.env_loss_floor, &TrainConfig::env_loss_floor,
               "floor of the negated environment loss");
}

TrainConfig resolve_config(const TrainArgs& t) {
  TrainConfig c;
  if (!t.config_file.empty()) {
    nlohmann::json j;
    try {
      j = read_json_file(t.config_file);
    } catch (const DataError& e) {
      throw ConfigError(e.what());
    }
    c = config_from_json(j);
  }
  for (const auto& [opt, apply] : t.overrides) {
    if (opt->count() > 0) apply(c);
  }
  c.validate();
  return c;
}

Graph load_graph(const DataArgs& d) {
  if (!d.graph_json.empty()) {
    if (!d.content.empty() || !d.cites.empty()) throw ConfigError("give either --graph or --content/--cites");
    if (!std::filesystem::exists(d.graph_json)) throw ConfigError("no such file: " + d.graph_json);
    return load_json_graph(d.graph_json);
  }
  if (d.content.empty() || d.cites.empty()) throw ConfigError("a dataset is required: --content and --cites, or --graph");
  for (const auto& p : {d.content, d.cites}) {
    if (!std::filesystem::exists(p)) throw ConfigError("no such file: " + p);
  }
  return load_content_cites(d.content, d.cites);
}

nlohmann::json data_json(const DataArgs& d) {
  if (!d.graph_json.empty()) return {{"graph", d.graph_json}};
  return {{"content", d.content}, {"cites", d.cites}};
}

void check_split(const ImbalancedSplit& s, const Graph& g, const std::string& path) {
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (auto v : *part) {
      if (v < 0 || v >= g.num_nodes()) throw DataError(path + ": node " + std::to_string(v) + " is not in the graph");
    }
  }
  if (s.train_counts.size() != static_cast<std::size_t>(g.class_count())) {
    throw DataError(path + ": train_counts has " + std::to_string(s.train_counts.size()) + " classes, graph has " +
                    std::to_string(g.class_count()));
  }
}

std::filesystem::path out_dir(const std::string& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw DataError("cannot create " + out + ": " + ec.message());
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed for " + path.string());
}

nlohmann::json metrics_json(const ClassificationMetrics& m) {
  nlohmann::json recall = nlohmann::json::array();
  for (double r : m.per_class_recall) recall.push_back(std::isnan(r) ? nlohmann::json(nullptr) : nlohmann::json(r));
  return {{"acc", m.accuracy}, {"bacc", m.balanced_accuracy}, {"f1", m.macro_f1}, {"per_class_recall", recall}};
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("--seeds needs at least one seed");
  return seeds;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Class-imbalanced node classification with invariant and environment feature extractors",
               "graphife"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  DataArgs data;
  SplitArgs split;
  TrainArgs train;
  std::string out_path = "out";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> rhos = {10.0, 50.0, 100.0};
  std::vector<std::string> methods = {"vanilla", "graphife"};
  int bins = 32;
  double beta = TrainConfig{}.beta;

  CLI::App* prepare = app.add_subcommand("prepare", "load a dataset, draw an imbalanced split, write split JSON");
  add_data_flags(*prepare, data);
  add_split_flags(*prepare, split, false);
  prepare->add_option("--seed", seed, "split seed")->capture_default_str();
  prepare->add_option("--out", out_path, "output directory")->capture_default_str();

  CLI::App* train_cmd = app.add_subcommand("train", "train one method with one seed");
  add_data_flags(*train_cmd, data);
  add_split_flags(*train_cmd, split, true);
  add_train_flags(*train_cmd, train, true);
  CLI::Option* seed_opt = train_cmd->add_option("--seed", seed, "seed of split, init and synthesis")
                              ->capture_default_str();
  train_cmd->add_option("--out", out_path, "output directory")->capture_default_str();

  CLI::App* bench = app.add_subcommand("bench", "multi-seed experiment with a report");
  add_data_flags(*bench, data);
  add_split_flags(*bench, split, false);
  add_train_flags(*bench, train, true);
  bench->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',')->capture_default_str();
  bench->add_option("--out", out_path, "output directory")->capture_default_str();

  CLI::App* sweep = app.add_subcommand("sweep", "grid over imbalance ratios and methods");
  add_data_flags(*sweep, data);
  add_split_flags(*sweep, split, false);
  add_train_flags(*sweep, train, false);
  sweep->add_option("--rhos", rhos, "comma-separated ascending ratios")->delimiter(',')->capture_default_str();
  sweep->add_option("--methods", methods, "comma-separated methods")->delimiter(',')->capture_default_str();
  sweep->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',')->capture_default_str();
  sweep->add_option("--out", out_path, "output directory")->capture_default_str();

  CLI::App* fi = app.add_subcommand("fi-diag", "feature inconsistency of mixup-synthesized minority nodes");
  add_data_flags(*fi, data);
  add_split_flags(*fi, split, true);
  fi->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',')->capture_default_str();
  fi->add_option("--beta", beta, "mixup Beta parameter")->capture_default_str();
  fi->add_option("--bins", bins, "histogram bins")->capture_default_str();
  fi->add_option("--out", out_path, "output directory")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    if (!subs.empty()) {
      out << subs.front()->help();
      return 0;
    }
    out << app.help();
    for (auto* sub : app.get_subcommands({})) out << "\n" << sub->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n";
    auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    const auto dir_for = [&]() { return out_dir(out_path); };
    if (prepare->parsed()) {
      const Graph g = load_graph(data);
      const ImbalancedSplit s = make_split(g, split.spec, seed);
      const auto dir = dir_for();
      const auto path = (dir / "split.json").string();
      save_split(s, path);
      nlohmann::json j = read_json_file(path);
      j["config"] = {{"data", data_json(data)}, {"split", split_spec_to_json(split.spec)}, {"seed", seed}};
      write_json_file(j, path);
      out << "split: " << s.train.size() << " train / " << s.val.size() << " val / " << s.test.size()
          << " test, achieved rho " << s.rho << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      TrainConfig c = resolve_config(train);
      if (seed_opt->count() > 0 || train.config_file.empty()) c.seed = seed;
      const Graph g = load_graph(data);
      const ImbalancedSplit s = split.split_file.empty() ? make_split(g, split.spec, c.seed) : load_split(split.split_file);
      if (!split.split_file.empty()) check_split(s, g, split.split_file);
      const nlohmann::json echo = {{"train", config_to_json(c)},
                                   {"data", data_json(data)},
                                   {"split", split.split_file.empty() ? split_spec_to_json(split.spec)
                                                                      : nlohmann::json{{"file", split.split_file}}}};
      FitResult r = fit(g, s, c);
      const ClassificationMetrics test = evaluate(r, g, s.test, c);
      const auto dir = dir_for();
      write_text(dir / "history.csv", history_csv(r.history));
      write_json_file(echo, (dir / "config.json").string());
      nlohmann::json ckpt = model_to_json(r.best);
      ckpt["config"] = echo;
      ckpt["best_epoch"] = r.best_epoch;
      write_json_file(ckpt, (dir / "checkpoint.json").string());
      write_json_file({{"config", echo}, {"best_epoch", r.best_epoch}, {"best_val_bacc", r.best_val_bacc},
                       {"achieved_rho", s.rho}, {"test", metrics_json(test)}},
                      (dir / "metrics.json").string());
      out << method_name(c.method) << " seed " << c.seed << ": best epoch " << r.best_epoch << ", test acc "
          << test.accuracy << " bacc " << test.balanced_accuracy << " f1 " << test.macro_f1 << "\n";
      return 0;
    }

    if (bench->parsed()) {
      const TrainConfig c = resolve_config(train);
      const Graph g = load_graph(data);
      const auto run_seeds = parse_seeds(seeds);
      const nlohmann::json echo = {{"train", config_to_json(c)}, {"data", data_json(data)},
                                   {"split", split_spec_to_json(split.spec)}, {"seeds", run_seeds}};
      const auto result = run_experiment(g, split.spec, c, run_seeds, workers_from_env());
      const auto dir = dir_for();
      emit_report({result}, dir.string(), echo);
      write_json_file(echo, (dir / "config.json").string());
      out << report_markdown({result});
      return 0;
    }

    if (sweep->parsed()) {
      const TrainConfig c = resolve_config(train);
      std::vector<Method> ms;
      for (const auto& m : methods) ms.push_back(parse_method(m));
      const Graph g = load_graph(data);
      const auto run_seeds = parse_seeds(seeds);
      const nlohmann::json echo = {{"train", config_to_json(c)}, {"data", data_json(data)},
                                   {"split", split_spec_to_json(split.spec)}, {"seeds", run_seeds},
                                   {"rhos", rhos}, {"methods", methods}};
      const auto results = rho_sweep(g, split.spec, rhos, ms, c, run_seeds, workers_from_env());
      const auto dir = dir_for();
      write_text(dir / "sweep.csv", sweep_csv(results));
      emit_report(results, dir.string(), echo);
      write_json_file(echo, (dir / "config.json").string());
      out << report_markdown(results);
      return 0;
    }

    if (fi->parsed()) {
      if (bins < 2) throw ConfigError("--bins must be >= 2");
      if (!(beta > 0.0)) throw ConfigError("--beta must be > 0");
      const Graph g = load_graph(data);
      const auto run_seeds = parse_seeds(seeds);
      nlohmann::json rows = nlohmann::json::array();
      for (auto sd : run_seeds) {
        const ImbalancedSplit s = split.split_file.empty() ? make_split(g, split.spec, sd) : load_split(split.split_file);
        if (!split.split_file.empty()) check_split(s, g, split.split_file);
        const FiDiagnostic d = fi_diagnostic(g, s, beta, sd, bins);
        rows.push_back({{"seed", sd}, {"fi_synthesized", d.synthesized}, {"fi_bootstrap", d.bootstrap},
                        {"originals", d.originals}, {"synthesized", d.synthesized_count}});
        out << "seed " << sd << ": FI synthesized " << d.synthesized << ", bootstrap " << d.bootstrap << "\n";
      }
      const nlohmann::json echo = {{"data", data_json(data)},
                                   {"split", split.split_file.empty() ? split_spec_to_json(split.spec)
                                                                      : nlohmann::json{{"file", split.split_file}}},
                                   {"beta", beta}, {"bins", bins}, {"seeds", run_seeds}};
      write_json_file({{"config", echo}, {"runs", rows}}, (dir_for() / "fi.json").string());
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace graphife
