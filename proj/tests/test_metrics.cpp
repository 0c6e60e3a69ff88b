#include "graphife/bench.hpp"
#include "graphife/error.hpp"
#include "graphife/metrics.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

namespace graphife {
namespace {

TEST(ClassificationMetrics, HandExample) {
  const std::vector<int> preds = {0, 0, 1};
  const std::vector<int> labels = {0, 1, 1};
  const auto m = classification_metrics(preds, labels, 2);
  EXPECT_NEAR(m.accuracy, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.balanced_accuracy, 0.75, 1e-15);
  EXPECT_NEAR(m.macro_f1, 2.0 / 3.0, 1e-15);
}

TEST(ClassificationMetrics, Perfect) {
  const std::vector<int> y = {0, 1, 2, 2, 1};
  const auto m = classification_metrics(y, y, 3);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.balanced_accuracy, 1.0);
  EXPECT_EQ(m.macro_f1, 1.0);
}

TEST(ClassificationMetrics, MajorityPredictor) {
  std::vector<int> labels(10, 0);
  labels[9] = 1;
  const std::vector<int> preds(10, 0);
  const auto m = classification_metrics(preds, labels, 2);
  EXPECT_NEAR(m.accuracy, 0.9, 1e-15);
  EXPECT_NEAR(m.balanced_accuracy, 0.5, 1e-15);
}

TEST(ClassificationMetrics, BaccIsMeanOfPresentRecalls) {
  Rng rng(3);
  std::uniform_int_distribution<int> cls(0, 4);
  std::vector<int> preds(200);
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < 200; ++i) {
    preds[i] = cls(rng);
    labels[i] = cls(rng) % 4;  // class 4 never appears as a label
  }
  const auto m = classification_metrics(preds, labels, 5);
  EXPECT_TRUE(std::isnan(m.per_class_recall[4]));
  double sum = 0.0;
  for (int c = 0; c < 4; ++c) sum += m.per_class_recall[static_cast<std::size_t>(c)];
  EXPECT_NEAR(m.balanced_accuracy, sum / 4.0, 1e-12);
  for (double v : {m.accuracy, m.balanced_accuracy, m.macro_f1}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(ClassificationMetrics, Errors) {
  const std::vector<int> none;
  EXPECT_THROW(classification_metrics(none, none, 2), DataError);
  const std::vector<int> a = {0, 1};
  const std::vector<int> b = {0};
  EXPECT_THROW(classification_metrics(a, b, 2), ShapeError);
  EXPECT_THROW(classification_metrics(a, a, 1), ShapeError);
}

TEST(ArgmaxRows, TiesGoLow) {
  Matrix m(2, 3);
  m << 1, 3, 3, -1, -2, -1;
  EXPECT_EQ(argmax_rows(m), (std::vector<int>{1, 0}));
}

TEST(FeatureInconsistency, IdenticalIsZero) {
  Matrix x(6, 2);
  x << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 1, 1;
  EXPECT_EQ(feature_inconsistency(x, x), 0.0);
}

TEST(FeatureInconsistency, DisjointSupportsGiveOne) {
  Matrix a = Matrix::Zero(4, 3);
  Matrix b = Matrix::Ones(5, 3);
  EXPECT_DOUBLE_EQ(feature_inconsistency(a, b), 1.0);
}

TEST(FeatureInconsistency, HandHistogram) {
  Matrix syn(4, 1);
  syn << 0, 0, 1, 1;
  Matrix ori = Matrix::Zero(4, 1);
  EXPECT_DOUBLE_EQ(feature_inconsistency(syn, ori, 2), 0.5);
}

TEST(FeatureInconsistency, ConstantDimensionContributesZero) {
  Matrix syn(4, 2);
  syn << 0, 5, 0, 5, 1, 5, 1, 5;
  Matrix ori(4, 2);
  ori << 0, 5, 0, 5, 0, 5, 0, 5;
  EXPECT_DOUBLE_EQ(feature_inconsistency(syn, ori, 2), 0.25);
}

TEST(FeatureInconsistency, BoundedSymmetricAndAffineInvariant) {
  Rng rng(8);
  std::normal_distribution<double> n01;
  Matrix a(40, 5);
  Matrix b(25, 5);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = 0.5 + n01(rng);
  const double fi = feature_inconsistency(a, b);
  EXPECT_GT(fi, 0.0);
  EXPECT_LE(fi, 1.0);
  EXPECT_EQ(feature_inconsistency(b, a), fi);
  Matrix a2 = (a.array() * 4.0 + 3.0).matrix();
  Matrix b2 = (b.array() * 4.0 + 3.0).matrix();
  EXPECT_NEAR(feature_inconsistency(a2, b2), fi, 1e-12);
}

TEST(FeatureInconsistency, Errors) {
  EXPECT_THROW(feature_inconsistency(Matrix::Zero(0, 2), Matrix::Zero(3, 2)), DataError);
  EXPECT_THROW(feature_inconsistency(Matrix::Zero(2, 2), Matrix::Zero(3, 2), 1), ConfigError);
  EXPECT_THROW(feature_inconsistency(Matrix::Zero(2, 2), Matrix::Zero(3, 3)), ShapeError);
}

TEST(Summarize, SampleStd) {
  const std::vector<double> one = {0.7};
  EXPECT_EQ(summarize(one).std, 0.0);
  const std::vector<double> v = {1.0, 2.0, 3.0, 4.0};
  const auto s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.std, std::sqrt(5.0 / 3.0), 1e-15);
}

// Three classes of 40, 30 and 20 nodes with informative features.
Graph bench_graph() {
  testing::PlantedPartitionConfig c;
  c.class_sizes = {40, 30, 20};
  c.feature_dim = 24;
  c.mean_degree = 4.0;
  c.seed = 5;
  return testing::planted_partition(c);
}

SplitSpec bench_split() {
  SplitSpec s;
  s.rho = 5.0;
  s.head = 10;
  s.val_per_class = 4;
  return s;
}

TrainConfig bench_config(Method m) {
  TrainConfig c;
  c.method = m;
  c.hidden = 8;
  c.epochs = 4;
  return c;
}

TEST(RunExperiment, SingleSeedHasZeroStd) {
  const Graph g = bench_graph();
  const std::vector<std::uint64_t> seeds = {7};
  for (Method m : {Method::kVanilla, Method::kReweight, Method::kUpsample, Method::kGraphIfe,
                   Method::kGraphIfeLight}) {
    TrainConfig c = bench_config(m);
    c.light_epsilon = 0.0;
    const auto r = run_experiment(g, bench_split(), c, seeds);
    EXPECT_EQ(r.method, method_name(m));
    ASSERT_EQ(r.runs.size(), 1u);
    EXPECT_EQ(r.acc.std, 0.0);
    EXPECT_EQ(r.bacc.std, 0.0);
    EXPECT_EQ(r.f1.std, 0.0);
    EXPECT_EQ(r.bacc.mean, r.runs[0].test.balanced_accuracy);
    EXPECT_DOUBLE_EQ(r.runs[0].achieved_rho, 5.0);
  }
}

TEST(RunExperiment, SeedOrderAndWorkersDoNotMatter) {
  const Graph g = bench_graph();
  const TrainConfig c = bench_config(Method::kGraphIfe);
  const std::vector<std::uint64_t> forward = {1, 2, 3};
  const std::vector<std::uint64_t> backward = {3, 1, 2};
  const auto a = run_experiment(g, bench_split(), c, forward, 1);
  const auto b = run_experiment(g, bench_split(), c, backward, 3);
  EXPECT_EQ(results_csv({a}), results_csv({b}));
  EXPECT_EQ(b.runs.front().seed, 1u);
  EXPECT_EQ(b.runs.back().seed, 3u);
}

TEST(RunExperiment, ErrorsNameTheSeed) {
  const Graph g = bench_graph();
  SplitSpec s = bench_split();
  s.kind = "zigzag";
  const std::vector<std::uint64_t> seeds = {4};
  try {
    run_experiment(g, s, bench_config(Method::kVanilla), seeds);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("seed 4"), std::string::npos);
  }
  const std::vector<std::uint64_t> dup = {1, 1};
  EXPECT_THROW(run_experiment(g, bench_split(), bench_config(Method::kVanilla), dup), ConfigError);
}

TEST(WorkersFromEnv, DefaultAndValidation) {
  unsetenv("GRAPHIFE_NUM_WORKERS");
  EXPECT_EQ(workers_from_env(), 1);
  setenv("GRAPHIFE_NUM_WORKERS", "3", 1);
  EXPECT_EQ(workers_from_env(), 3);
  setenv("GRAPHIFE_NUM_WORKERS", "zero", 1);
  EXPECT_THROW(workers_from_env(), ConfigError);
  unsetenv("GRAPHIFE_NUM_WORKERS");
}

TEST(RhoSweep, GridCardinality) {
  const Graph g = bench_graph();
  const std::vector<double> one_rho = {2.0};
  const std::vector<Method> one_method = {Method::kVanilla};
  const std::vector<std::uint64_t> one_seed = {1};
  TrainConfig c = bench_config(Method::kVanilla);
  EXPECT_EQ(rho_sweep(g, bench_split(), one_rho, one_method, c, one_seed).size(), 1u);

  c.epochs = 2;
  const std::vector<double> rhos = {2.0, 5.0, 10.0};
  const std::vector<Method> methods = {Method::kVanilla, Method::kGraphIfe};
  const std::vector<std::uint64_t> seeds = {1, 2};
  const auto grid = rho_sweep(g, bench_split(), rhos, methods, c, seeds);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_EQ(grid[1].method, "graphife");
  EXPECT_EQ(grid[4].rho, 10.0);
  for (const auto& r : grid) EXPECT_EQ(r.runs.size(), 2u);
  const std::string csv = sweep_csv(grid);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "rho,method,metric,mean,std");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6 * 3);
}

TEST(RhoSweep, RejectsBadGrid) {
  const Graph g = bench_graph();
  const std::vector<Method> methods = {Method::kVanilla};
  const std::vector<std::uint64_t> seeds = {1};
  const std::vector<double> none;
  const std::vector<double> descending = {10.0, 5.0};
  const TrainConfig c = bench_config(Method::kVanilla);
  EXPECT_THROW(rho_sweep(g, bench_split(), none, methods, c, seeds), ConfigError);
  EXPECT_THROW(rho_sweep(g, bench_split(), descending, methods, c, seeds), ConfigError);
}

ExperimentResult fake_result(const std::string& method, double rho) {
  ExperimentResult r;
  r.method = method;
  r.rho = rho;
  r.runs.resize(2);
  r.runs[0].seed = 3;
  r.runs[1].seed = 9;
  r.acc = {0.7360123456789, 0.0043};
  r.bacc = {1.0 / 3.0, 0.1};
  r.f1 = {0.5, 0.0};
  return r;
}

TEST(EmitReport, EmptyResultsWriteHeaderOnly) {
  testing::TempDir dir;
  emit_report({}, dir.file("out"));
  EXPECT_EQ(testing::read_file(dir.file("out/results.csv")), "method,rho,metric,mean,std,seeds\n");
}

TEST(EmitReport, RoundTripAndTableRows) {
  testing::TempDir dir;
  const std::vector<ExperimentResult> results = {fake_result("vanilla", 100.0), fake_result("graphife", 100.0)};
  emit_report(results, dir.path(), {{"epochs", 500}});
  const auto rows = parse_results_csv(testing::read_file(dir.file("results.csv")));
  EXPECT_EQ(rows, result_rows(results));
  EXPECT_EQ(rows[0].seeds, (std::vector<std::uint64_t>{3, 9}));
  const std::string md = testing::read_file(dir.file("report.md"));
  std::size_t table_rows = 0;
  std::istringstream in(md);
  std::string line;
  while (std::getline(in, line)) table_rows += line.rfind("| ", 0) == 0 ? 1 : 0;
  EXPECT_EQ(table_rows, 1 + results.size());  // header plus one per result
  EXPECT_NE(md.find("73.60 ± 0.43"), std::string::npos);
  EXPECT_NE(md.find("\"epochs\": 500"), std::string::npos);

  testing::TempDir again;
  emit_report(results, again.path(), {{"epochs", 500}});
  EXPECT_EQ(testing::read_file(again.file("results.csv")), testing::read_file(dir.file("results.csv")));
  EXPECT_EQ(testing::read_file(again.file("report.md")), md);
}

TEST(EmitReport, UnwritablePath) {
  testing::TempDir dir;
  dir.write("blocker", "x");
  EXPECT_THROW(emit_report({}, dir.file("blocker/sub")), DataError);
}

TEST(FiDiagnostic, MixupIsLessConsistentThanBootstrap) {
  testing::PlantedPartitionConfig c;
  c.class_sizes = {120, 100, 80};
  c.feature_dim = 60;
  c.seed = 2;
  const Graph g = testing::planted_partition(c);
  const ImbalancedSplit split = make_longtail_split(g, 10.0, 40, 5, 0, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto d = fi_diagnostic(g, split, 2.0, seed);
    EXPECT_GT(d.synthesized, d.bootstrap) << "seed " << seed;
    EXPECT_GE(d.bootstrap, 0.0);
    EXPECT_LE(d.synthesized, 1.0);
    EXPECT_EQ(d.originals, 180);
    EXPECT_GT(d.synthesized_count, 0);
  }
}

}  // namespace
}  // namespace graphife
