#include "graphife/adam.hpp"
#include "graphife/error.hpp"
#include "graphife/ops.hpp"
#include "support/fd_check.hpp"
#include "support/oracles.hpp"
#include "support/primitive_cases.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

namespace graphife {
namespace {

using ad::Tape;
using ad::Tensor;
using testing::check_gradients;
using testing::random_matrix;
using testing::random_sparse;
using testing::spaced_columns;

TEST(Spmm, IdentityLeavesInputUnchanged) {
  Tape tape;
  Matrix x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  auto eye = std::make_shared<const SparseMatrix>(SparseMatrix::identity(3));
  Tensor y = ad::spmm(eye, tape.constant(x));
  EXPECT_EQ(y.value(), x);
}

TEST(Spmm, TwoNodeNormalizedGraphAveragesRows) {
  Tape tape;
  Matrix half = Matrix::Constant(2, 2, 0.5);
  auto a = std::make_shared<const SparseMatrix>(SparseMatrix::from_dense(half));
  Matrix x(2, 2);
  x << 2, 0, 0, 2;
  Tensor y = ad::spmm(a, tape.constant(x));
  EXPECT_EQ(y.value(), Matrix::Ones(2, 2));
}

TEST(Spmm, MatchesDenseProductOnRandomSparse) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    SparseMatrix a = random_sparse(rng, 8, 8, 0.3);
    Matrix x = random_matrix(rng, 8, 4);
    Matrix dense = a.to_dense();
    Matrix expected = Matrix::Zero(8, 4);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 8; ++k) expected(i, j) += dense(i, k) * x(k, j);
    Tape tape;
    Tensor y = ad::spmm(std::make_shared<const SparseMatrix>(a), tape.constant(x));
    EXPECT_LE((y.value() - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Spmm, RejectsDimensionMismatch) {
  Tape tape;
  auto eye = std::make_shared<const SparseMatrix>(SparseMatrix::identity(3));
  EXPECT_THROW(ad::spmm(eye, tape.constant(Matrix::Zero(4, 2))), ShapeError);
}

TEST(SparseMatrix, RejectsUnsortedColumns) {
  EXPECT_THROW(SparseMatrix(1, 3, {0, 2}, {2, 1}, {1.0, 1.0}), ShapeError);
  EXPECT_THROW(SparseMatrix(1, 3, {0, 3}, {0, 1}, {1.0, 1.0}), ShapeError);
}

TEST(Primitives, AnalyticValues) {
  Tape tape;
  EXPECT_DOUBLE_EQ(ad::sigmoid(tape.constant(Matrix::Zero(1, 1))).item(), 0.5);
  Matrix v(1, 2);
  v << -1, 2;
  Matrix expected(1, 2);
  expected << 0, 2;
  EXPECT_EQ(ad::relu(tape.constant(v)).value(), expected);
  Tensor ls = ad::log_softmax(tape.constant(Matrix::Zero(1, 3)));
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(ls.value()(0, j), -std::log(3.0), 1e-15);
}

TEST(Primitives, ReduceShapes) {
  Tape tape;
  Matrix x(2, 3);
  x << 1, 2, 3, -4, 5, 6;
  Tensor t = tape.constant(x);
  EXPECT_EQ(ad::row_mean(t).rows(), 2);
  EXPECT_EQ(ad::row_mean(t).cols(), 1);
  EXPECT_DOUBLE_EQ(ad::row_mean(t).value()(1, 0), 7.0 / 3.0);
  EXPECT_EQ(ad::col_mean(t).rows(), 1);
  EXPECT_DOUBLE_EQ(ad::col_mean(t).value()(0, 0), -1.5);
  EXPECT_DOUBLE_EQ(ad::abs_mean(t).item(), 21.0 / 6.0);
}

TEST(Primitives, ShapeErrors) {
  Tape tape;
  Tensor a = tape.constant(Matrix::Zero(2, 3));
  Tensor b = tape.constant(Matrix::Zero(2, 2));
  EXPECT_THROW(ad::matmul(a, b), ShapeError);
  EXPECT_THROW(ad::add(a, b), ShapeError);
  EXPECT_THROW(ad::elementwise_mul(a, b), ShapeError);
  EXPECT_THROW(ad::concat_cols(a, tape.constant(Matrix::Zero(3, 1))), ShapeError);
  const std::vector<std::int64_t> bad{0, 2};
  EXPECT_THROW(ad::row_gather(a, bad), ShapeError);
  EXPECT_THROW(ad::log_softmax(tape.constant(Matrix::Zero(2, 0))), ShapeError);
}

TEST(Primitives, NonFiniteResultsAreErrors) {
  Tape tape;
  Tensor x = tape.constant(Matrix::Constant(1, 1, 1e300));
  EXPECT_THROW(ad::scalar_mul(x, 1e300), NumericError);
  Matrix nan = Matrix::Constant(1, 1, std::nan(""));
  EXPECT_THROW(tape.variable(nan), NumericError);
}

TEST(Primitives, OperandsMustShareTape) {
  Tape t1;
  Tape t2;
  EXPECT_THROW(ad::add(t1.constant(Matrix::Zero(1, 1)), t2.constant(Matrix::Zero(1, 1))),
               TapeError);
}

// Every primitive's VJP against central differences on random inputs.
TEST(PrimitiveGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const std::uint64_t s = 100 + trial;
    const auto cases = testing::primitive_cases(rng, 100 + trial);
    for (const auto& c : cases) {
      const auto result = check_gradients(c.inputs, c.build);
      EXPECT_LT(result.max_rel_error, 1e-4)
          << c.name << " trial " << trial << ": analytic " << result.analytic << " numeric "
          << result.numeric;
    }
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  Tape tape;
  const std::vector<int> labels{0, 3, 6};
  Tensor loss = ad::cross_entropy(tape.constant(Matrix::Zero(3, 7)), labels);
  EXPECT_NEAR(loss.item(), std::log(7.0), 1e-15);
  EXPECT_NEAR(loss.item(), 1.9459, 1e-4);
}

TEST(CrossEntropy, SaturatedLogitsGiveNearZero) {
  Tape tape;
  Matrix logits = Matrix::Zero(2, 3);
  logits(0, 1) = 50;
  logits(1, 2) = 50;
  const std::vector<int> labels{1, 2};
  EXPECT_LT(ad::cross_entropy(tape.constant(logits), labels).item(), 1e-9);
}

TEST(CrossEntropy, WeightedMatchesScalarOracle) {
  std::mt19937_64 rng(5);
  Matrix logits = random_matrix(rng, 5, 3, -3, 3);
  const std::vector<int> labels{0, 2, 1, 1, 0};
  const std::vector<double> weights{1, 1.2, 1, 1, 1};
  double expected = 0.0;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> row(logits.row(i).data(), logits.row(i).data() + 3);
    expected += weights[i] * testing::scalar_cross_entropy(row, labels[i]);
  }
  expected /= 5.0;
  Tape tape;
  EXPECT_NEAR(ad::weighted_cross_entropy(tape.constant(logits), labels, weights).item(), expected,
              1e-12);
}

TEST(CrossEntropy, UnitWeightsAreBitIdenticalToUnweighted) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix logits = random_matrix(rng, 9, 4, -5, 5);
    std::vector<int> labels(9);
    std::uniform_int_distribution<int> pick(0, 3);
    for (int& y : labels) y = pick(rng);
    const std::vector<double> ones(9, 1.0);
    Tape tape;
    Tensor a = ad::cross_entropy(tape.constant(logits), labels);
    Tensor b = ad::weighted_cross_entropy(tape.constant(logits), labels, ones);
    EXPECT_EQ(a.item(), b.item());
  }
}

TEST(CrossEntropy, RejectsBadLabelsAndWeights) {
  Tape tape;
  Tensor logits = tape.constant(Matrix::Zero(2, 3));
  const std::vector<int> bad_labels{0, 3};
  const std::vector<int> labels{0, 1};
  const std::vector<double> negative{1.0, -0.5};
  const std::vector<double> short_weights{1.0};
  EXPECT_THROW(ad::cross_entropy(logits, bad_labels), ShapeError);
  EXPECT_THROW(ad::weighted_cross_entropy(logits, labels, negative), NumericError);
  EXPECT_THROW(ad::weighted_cross_entropy(logits, labels, short_weights), ShapeError);
}

TEST(Backward, LinearMapGradient) {
  Tape tape;
  Tensor x = tape.variable(Matrix::Random(3, 2));
  Tensor loss = ad::sum(ad::scalar_mul(x, 2.0));
  tape.backward(loss);
  EXPECT_EQ(tape.grad(x), Matrix::Constant(3, 2, 2.0));
}

TEST(Backward, SigmoidDerivativeAtZero) {
  Tape tape;
  Tensor x = tape.variable(Matrix::Zero(1, 1));
  tape.backward(ad::sigmoid(x));
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 0.25);
}

TEST(Backward, RejectsNonScalarAndSecondCall) {
  Tape tape;
  Tensor x = tape.variable(Matrix::Ones(2, 2));
  EXPECT_THROW(tape.backward(x), TapeError);
  Tensor loss = ad::sum(x);
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), TapeError);
  EXPECT_THROW(ad::sum(x), TapeError);
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Tape tape;
  Tensor c = tape.constant(Matrix::Ones(2, 2));
  Tensor x = tape.variable(Matrix::Ones(2, 2));
  tape.backward(ad::sum(ad::elementwise_mul(c, x)));
  EXPECT_EQ(tape.grad(c), Matrix::Zero(2, 2));
  EXPECT_EQ(tape.grad(x), Matrix::Ones(2, 2));
}

TEST(Tape, RecordsAreTopologicallyOrdered) {
  std::mt19937_64 rng(3);
  Tape tape;
  Tensor a = tape.variable(random_matrix(rng, 3, 3));
  Tensor b = tape.variable(random_matrix(rng, 3, 3));
  Tensor c = ad::relu(ad::matmul(a, b));
  Tensor d = ad::add(c, ad::sigmoid(a));
  Tensor e = ad::mean(ad::log_softmax(d));
  for (Tensor t : {a, b, c, d, e}) {
    for (std::size_t in : tape.inputs(t)) EXPECT_LT(in, t.id());
  }
}

TEST(Tape, ReplayGivesBitIdenticalGradients) {
  auto run = [] {
    std::mt19937_64 rng(77);
    Tape tape;
    Tensor w = tape.variable(random_matrix(rng, 4, 3));
    Tensor x = tape.constant(random_matrix(rng, 6, 4));
    const std::vector<int> labels{0, 1, 2, 0, 1, 2};
    Tensor loss = ad::add(ad::cross_entropy(ad::matmul(x, w), labels),
                          ad::sliced_wasserstein(ad::matmul(x, w), x.tape().constant(
                                                                       random_matrix(rng, 6, 3))));
    tape.backward(loss);
    return tape.grad(w);
  };
  const Matrix g1 = run();
  const Matrix g2 = run();
  EXPECT_EQ(0, std::memcmp(g1.data(), g2.data(), sizeof(double) * g1.size()));
}

TEST(Adam, ZeroGradientIsFixedPoint) {
  Matrix w = Matrix::Constant(2, 2, 0.3);
  const Matrix before = w;
  AdamState state;
  std::vector<ParamRef> params{{"w", &w}};
  std::vector<Matrix> grads{Matrix::Zero(2, 2)};
  for (int i = 0; i < 3; ++i) adam_step(params, grads, state, 0.01);
  EXPECT_EQ(w, before);
  EXPECT_EQ(state.step, 3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {1e-3, 0.5, -7.0, 123.0}) {
    Matrix w = Matrix::Constant(1, 1, 1.0);
    AdamState state;
    std::vector<ParamRef> params{{"w", &w}};
    std::vector<Matrix> grads{Matrix::Constant(1, 1, g)};
    adam_step(params, grads, state, 0.01);
    EXPECT_NEAR(std::abs(w(0, 0) - 1.0), 0.01, 1e-6) << g;
    EXPECT_EQ(w(0, 0) < 1.0, g > 0);
  }
}

TEST(Adam, MatchesScalarTraceOnQuadratic) {
  const double lr = 0.1;
  const auto expected = testing::scalar_adam_trace(1.5, lr, 5);
  Matrix w = Matrix::Constant(1, 1, 1.5);
  AdamState state;
  std::vector<ParamRef> params{{"w", &w}};
  for (int t = 0; t < 5; ++t) {
    std::vector<Matrix> grads{2.0 * w};
    adam_step(params, grads, state, lr);
    EXPECT_NEAR(w(0, 0), expected[t], 1e-9);
  }
}

TEST(Adam, NanGradientNamesParameter) {
  Matrix w = Matrix::Zero(1, 1);
  AdamState state;
  std::vector<ParamRef> params{{"encoder.layer1.weight", &w}};
  std::vector<Matrix> grads{Matrix::Constant(1, 1, std::nan(""))};
  try {
    adam_step(params, grads, state, 0.01);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.layer1.weight"), std::string::npos);
  }
  EXPECT_THROW(adam_step(params, std::vector<Matrix>{Matrix::Zero(1, 1)}, state, 0.0),
               ConfigError);
}

Tensor column(Tape& tape, std::vector<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return tape.constant(m);
}

TEST(Wasserstein, IdenticalSamplesGiveZero) {
  Tape tape;
  EXPECT_EQ(ad::sorted_1d_wasserstein(column(tape, {3, 1, 2}), column(tape, {1, 2, 3})).item(),
            0.0);
}

TEST(Wasserstein, ConstantShift) {
  Tape tape;
  EXPECT_DOUBLE_EQ(ad::sorted_1d_wasserstein(column(tape, {0, 2}), column(tape, {1, 3})).item(),
                   1.0);
}

TEST(Wasserstein, UnequalSizesMatchTransportOracle) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> a(7);
    std::vector<double> b(5);
    for (double& v : a) v = n01(rng);
    for (double& v : b) v = 0.5 + 2.0 * n01(rng);
    const double oracle = testing::transport_cost_uniform(
        testing::quantile_grid(a, ad::kWassersteinQuantiles),
        testing::quantile_grid(b, ad::kWassersteinQuantiles));
    Tape tape;
    const double got = ad::sorted_1d_wasserstein(column(tape, a), column(tape, b)).item();
    EXPECT_NEAR(got, oracle, 1e-9);
  }
}

TEST(Wasserstein, EqualSizesMatchTransportOracle) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2, 2);
  std::vector<double> a(9);
  std::vector<double> b(9);
  for (double& v : a) v = u(rng);
  for (double& v : b) v = u(rng);
  Tape tape;
  EXPECT_NEAR(ad::sorted_1d_wasserstein(column(tape, a), column(tape, b)).item(),
              testing::transport_cost_uniform(a, b), 1e-12);
}

TEST(Wasserstein, NonNegativeSymmetricAndZeroOnEqualProfiles) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = size(rng);
    const int k = size(rng);
    const int d = 1 + trial % 3;
    Matrix a = random_matrix(rng, m, d);
    Matrix b = random_matrix(rng, k, d);
    Tape tape;
    const double ab = ad::sliced_wasserstein(tape.constant(a), tape.constant(b)).item();
    const double ba = ad::sliced_wasserstein(tape.constant(b), tape.constant(a)).item();
    EXPECT_GE(ab, 0.0);
    EXPECT_DOUBLE_EQ(ab, ba);
    // Row permutation keeps every quantile profile.
    Matrix shuffled = a.colwise().reverse();
    EXPECT_EQ(ad::sliced_wasserstein(tape.constant(a), tape.constant(shuffled)).item(), 0.0);
  }
}

TEST(Wasserstein, QuantileGridOfDivisorSizeIsExact) {
  // With m dividing the grid size the resampled profile carries the same atoms.
  Tape tape;
  const double w = ad::sorted_1d_wasserstein(column(tape, {0, 1, 2, 3}),
                                             column(tape, {0, 0, 1, 1, 2, 2, 3, 3})).item();
  EXPECT_EQ(w, 0.0);
}

TEST(Wasserstein, EmptyInputIsError) {
  Tape tape;
  EXPECT_THROW(
      ad::sorted_1d_wasserstein(tape.constant(Matrix::Zero(0, 1)), column(tape, {1.0})),
      ShapeError);
}

}  // namespace
}  // namespace graphife
