#include "graphife/backbone.hpp"
#include "graphife/checkpoint.hpp"
#include "graphife/error.hpp"
#include "graphife/ops.hpp"
#include "support/fd_check.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <numeric>

namespace graphife {
namespace {

using ad::Tape;
using ad::Tensor;

Matrix dense_gcn(const Graph& g, const Matrix& h, const GnnLayerParams& p) {
  const auto n = g.num_nodes();
  Matrix a = g.adjacency().to_dense() + Matrix::Identity(n, n);
  Matrix norm(n, n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) norm(i, j) = a(i, j) / std::sqrt(a.row(i).sum() * a.row(j).sum());
  Matrix out = norm * h * p.weight;
  out.rowwise() += p.bias.row(0);
  return out;
}

Matrix dense_sage(const Graph& g, const Matrix& h, const GnnLayerParams& p) {
  const auto n = g.num_nodes();
  Matrix concat(n, 2 * h.cols());
  for (std::int64_t v = 0; v < n; ++v) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(h.cols());
    for (auto u : g.neighbors(v)) mean += h.row(u);
    if (g.degree(v) > 0) mean /= static_cast<double>(g.degree(v));
    concat.row(v) << h.row(v), mean;
  }
  Matrix out = concat * p.weight;
  out.rowwise() += p.bias.row(0);
  return out;
}

GnnLayerParams random_layer(LayerKind kind, std::int64_t in, std::int64_t out, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 0, "test-layer");
  GnnLayerParams p = init_layer(kind, in, out, rng);
  std::normal_distribution<double> n01;
  for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias.data()[i] = n01(rng);
  return p;
}

TEST(GcnLayer, IdentityCase) {
  Graph g(Matrix::Zero(3, 2), {0, 1, 0}, {});
  GraphOperators ops = make_operators(g);
  GnnLayerParams p;
  p.weight = Matrix::Identity(2, 2);
  p.bias = Matrix::Zero(1, 2);
  Tape tape;
  Matrix h(3, 2);
  h << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(gcn_layer(ops.gcn, tape.constant(h), record_layer(tape, p, false)).value(), h);
}

TEST(GcnLayer, SymmetricPairKeepsEqualRows) {
  Graph g(Matrix::Zero(2, 3), {0, 1}, std::vector<Edge>{{0, 1}});
  GnnLayerParams p = random_layer(LayerKind::kGcn, 3, 4, 1);
  Tape tape;
  Matrix h(2, 3);
  h << 0.3, -1, 2, 0.3, -1, 2;
  Matrix out = gcn_layer(make_operators(g).gcn, tape.constant(h), record_layer(tape, p, false)).value();
  EXPECT_EQ(out.row(0), out.row(1));
}

TEST(GcnLayer, MatchesDenseOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Graph g = testing::tiny_graph(6, 2, 3, seed);
    GnnLayerParams p = random_layer(LayerKind::kGcn, 3, 4, seed);
    Tape tape;
    Matrix h = g.features();
    Matrix out = gcn_layer(make_operators(g).gcn, tape.constant(h), record_layer(tape, p, false)).value();
    EXPECT_LE((out - dense_gcn(g, h, p)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SageLayer, IsolatedNodeUsesZeroMean) {
  Graph g(Matrix::Zero(3, 2), {0, 1, 0}, std::vector<Edge>{{0, 1}});
  GnnLayerParams p = random_layer(LayerKind::kSage, 2, 3, 2);
  Matrix h(3, 2);
  h << 1, 2, 3, 4, 5, 6;
  Tape tape;
  Matrix out = sage_layer(make_operators(g).mean, tape.constant(h), record_layer(tape, p, false)).value();
  Matrix concat(1, 4);
  concat << 5, 6, 0, 0;
  EXPECT_LE((out.row(2) - (concat * p.weight + p.bias)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SageLayer, UniformNeighborhood) {
  Graph g(Matrix::Zero(3, 2), {0, 1, 0}, std::vector<Edge>{{0, 1}, {0, 2}});
  GnnLayerParams p = random_layer(LayerKind::kSage, 2, 3, 3);
  Matrix h = Matrix::Constant(3, 2, 0.7);
  Tape tape;
  Matrix out = sage_layer(make_operators(g).mean, tape.constant(h), record_layer(tape, p, false)).value();
  Matrix concat = Matrix::Constant(1, 4, 0.7);
  EXPECT_LE((out.row(0) - (concat * p.weight + p.bias)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SageLayer, MatchesDenseOracle) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Graph g = testing::tiny_graph(6, 2, 3, seed + 10);
    GnnLayerParams p = random_layer(LayerKind::kSage, 3, 4, seed);
    Tape tape;
    Matrix h = g.features();
    Matrix out = sage_layer(make_operators(g).mean, tape.constant(h), record_layer(tape, p, false)).value();
    EXPECT_LE((out - dense_sage(g, h, p)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SageLayer, RejectsOddWeight) {
  Graph g(Matrix::Zero(2, 2), {0, 1}, {});
  GnnLayerParams p;
  p.kind = LayerKind::kSage;
  p.weight = Matrix::Zero(3, 2);
  p.bias = Matrix::Zero(1, 2);
  Tape tape;
  EXPECT_THROW(sage_layer(make_operators(g).mean, tape.constant(g.features()), record_layer(tape, p, false)),
               ShapeError);
}

TEST(Encode, ZeroWeightsGiveBiasRows) {
  Graph g = testing::tiny_graph(7, 2, 5, 4);
  for (LayerKind kind : {LayerKind::kGcn, LayerKind::kSage}) {
    Rng rng(1);
    EncoderParams p = init_encoder(kind, 5, 6, rng);
    p.layer1.weight.setZero();
    p.layer2.weight.setZero();
    p.layer2.bias.setConstant(0.25);
    Tape tape;
    Tensor z = encode(make_operators(g), record_layer(tape, p.layer1, false), record_layer(tape, p.layer2, false));
    EXPECT_EQ(z.value(), Matrix::Constant(7, 6, 0.25));
  }
}

TEST(Encode, OutputShape) {
  for (std::int64_t n : {1, 5, 40}) {
    Graph g = testing::tiny_graph(n, 2, 3, 7);
    Rng rng(2);
    EncoderParams p = init_encoder(LayerKind::kGcn, 3, 256, rng);
    Tape tape;
    Tensor z = encode(make_operators(g), record_layer(tape, p.layer1, false), record_layer(tape, p.layer2, false));
    EXPECT_EQ(z.rows(), n);
    EXPECT_EQ(z.cols(), 256);
    EXPECT_TRUE(z.value().allFinite());
  }
}

TEST(Encode, RejectsFeatureWidthMismatch) {
  Graph g = testing::tiny_graph(4, 2, 3, 7);
  Rng rng(2);
  EncoderParams p = init_encoder(LayerKind::kGcn, 5, 4, rng);
  Tape tape;
  EXPECT_THROW(encode(make_operators(g), record_layer(tape, p.layer1, false), record_layer(tape, p.layer2, false)),
               ShapeError);
}

// mean(encode(g)) against finite differences in every parameter and in the input features.
TEST(Encode, GradientMatchesFiniteDifferences) {
  for (LayerKind kind : {LayerKind::kGcn, LayerKind::kSage}) {
    Graph g = testing::tiny_graph(12, 2, 4, 21);
    Rng rng(5);
    EncoderParams p = init_encoder(kind, 4, 5, rng);
    p.layer1.bias.setConstant(0.05);
    std::vector<Matrix> inputs{p.layer1.weight, p.layer1.bias, p.layer2.weight, p.layer2.bias};
    GraphOperators ops = make_operators(g);
    auto build = [&](Tape&, std::span<const Tensor> v) {
      return ad::mean(encode(ops, LayerTensors{kind, v[0], v[1]}, LayerTensors{kind, v[2], v[3]}));
    };
    auto r = testing::check_gradients(inputs, build);
    EXPECT_LT(r.max_rel_error, 1e-4) << layer_kind_name(kind);

    // Input features as a dense variable through the layer primitives.
    auto through_x = [&](Tape& tape, std::span<const Tensor> v) {
      LayerTensors l1 = record_layer(tape, p.layer1, false);
      LayerTensors l2 = record_layer(tape, p.layer2, false);
      return ad::mean(apply_layer(ops, ad::relu(apply_layer(ops, v[0], l1)), l2));
    };
    auto rx = testing::check_gradients(std::vector<Matrix>{g.features()}, through_x);
    EXPECT_LT(rx.max_rel_error, 1e-4) << layer_kind_name(kind);
  }
}

TEST(Encode, SparseFirstLayerMatchesDensePath) {
  Graph g = testing::tiny_graph(10, 2, 6, 3);
  for (LayerKind kind : {LayerKind::kGcn, LayerKind::kSage}) {
    Rng rng(4);
    EncoderParams p = init_encoder(kind, 6, 5, rng);
    GraphOperators ops = make_operators(g);
    Tape tape;
    LayerTensors l1 = record_layer(tape, p.layer1, false);
    LayerTensors l2 = record_layer(tape, p.layer2, false);
    Matrix a = encode(ops, l1, l2).value();
    Matrix b = apply_layer(ops, ad::relu(apply_layer(ops, tape.constant(g.features()), l1)), l2).value();
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Encode, PermutationEquivariance) {
  Graph g = testing::tiny_graph(9, 3, 4, 8);
  std::vector<std::int64_t> pi{4, 7, 0, 2, 8, 1, 6, 3, 5};
  Matrix x(9, 4);
  std::vector<int> labels(9);
  for (std::int64_t v = 0; v < 9; ++v) {
    x.row(pi[static_cast<std::size_t>(v)]) = g.features().row(v);
    labels[static_cast<std::size_t>(pi[static_cast<std::size_t>(v)])] = g.label(v);
  }
  std::vector<Edge> edges;
  for (auto [u, v] : g.edge_list()) edges.emplace_back(pi[static_cast<std::size_t>(u)], pi[static_cast<std::size_t>(v)]);
  Graph h(x, labels, edges, 3);
  Rng rng(9);
  EncoderParams p = init_encoder(LayerKind::kGcn, 4, 6, rng);
  Tape tape;
  Matrix zg = encode(make_operators(g), record_layer(tape, p.layer1, false), record_layer(tape, p.layer2, false)).value();
  Matrix zh = encode(make_operators(h), record_layer(tape, p.layer1, false), record_layer(tape, p.layer2, false)).value();
  for (std::int64_t v = 0; v < 9; ++v) {
    EXPECT_LE((zg.row(v) - zh.row(pi[static_cast<std::size_t>(v)])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Extract, IdentityAdjacencyIsLinearMap) {
  Graph g(Matrix::Zero(4, 1), {0, 1, 0, 1}, {});
  GnnLayerParams head = random_layer(LayerKind::kGcn, 3, 2, 6);
  Rng rng(1);
  Matrix z = Matrix::Random(4, 3);
  Tape tape;
  Matrix f = extract(make_operators(g), tape.constant(z), record_layer(tape, head, false)).value();
  Matrix expected = z * head.weight;
  expected.rowwise() += head.bias.row(0);
  EXPECT_LE((f - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Extract, IdenticalHeadsGiveIdenticalFeatures) {
  Graph g = testing::tiny_graph(8, 2, 3, 2);
  Rng r1(42);
  Rng r2(42);
  GnnLayerParams theta_i = init_layer(LayerKind::kGcn, 3, 4, r1);
  GnnLayerParams theta_e = init_layer(LayerKind::kGcn, 3, 4, r2);
  Tape tape;
  Tensor z = tape.constant(g.features());
  GraphOperators ops = make_operators(g);
  Matrix fi = extract(ops, z, record_layer(tape, theta_i, true)).value();
  Matrix fe = extract(ops, z, record_layer(tape, theta_e, true)).value();
  EXPECT_EQ(0, std::memcmp(fi.data(), fe.data(), sizeof(double) * fi.size()));
}

TEST(Extract, MatchesDenseOracle) {
  Graph g = testing::tiny_graph(7, 2, 3, 30);
  GnnLayerParams head = random_layer(LayerKind::kSage, 3, 2, 31);
  Tape tape;
  Matrix f = extract(make_operators(g), tape.constant(g.features()), record_layer(tape, head, false)).value();
  EXPECT_LE((f - dense_sage(g, g.features(), head)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  testing::TempDir dir;
  Rng rng(77);
  EncoderParams enc = init_encoder(LayerKind::kSage, 13, 7, rng);
  enc.layer1.bias.setRandom();
  enc.layer2.weight(0, 0) = 1.0 / 3.0;
  enc.layer2.weight(1, 0) = 5e-324;
  std::vector<ParamRef> refs;
  append_params(enc, "encoder", refs);
  AdamState state;
  std::vector<Matrix> grads;
  for (const auto& r : refs) grads.push_back(Matrix::Constant(r.value->rows(), r.value->cols(), 0.1));
  adam_step(refs, grads, state, 0.01);

  nlohmann::json j;
  j["parameters"] = params_to_json(refs);
  j["optimizers"]["encoder"] = adam_to_json(state);
  write_json_file(j, dir.file("ckpt.json"));

  EncoderParams other = init_encoder(LayerKind::kSage, 13, 7, rng);
  std::vector<ParamRef> other_refs;
  append_params(other, "encoder", other_refs);
  nlohmann::json k = read_json_file(dir.file("ckpt.json"));
  params_from_json(k.at("parameters"), other_refs);
  AdamState loaded = adam_from_json(k.at("optimizers").at("encoder"));
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Matrix& a = *refs[i].value;
    const Matrix& b = *other_refs[i].value;
    ASSERT_TRUE(same_shape(a, b));
    EXPECT_EQ(0, std::memcmp(a.data(), b.data(), sizeof(double) * a.size())) << refs[i].name;
    EXPECT_EQ(0, std::memcmp(state.second_moment[i].data(), loaded.second_moment[i].data(),
                             sizeof(double) * a.size()));
  }
  EXPECT_EQ(loaded.step, 1);
}

TEST(Checkpoint, ShapeMismatchIsError) {
  Rng rng(1);
  EncoderParams a = init_encoder(LayerKind::kGcn, 4, 3, rng);
  EncoderParams b = init_encoder(LayerKind::kGcn, 5, 3, rng);
  std::vector<ParamRef> ra;
  std::vector<ParamRef> rb;
  append_params(a, "encoder", ra);
  append_params(b, "encoder", rb);
  EXPECT_THROW(params_from_json(params_to_json(ra), rb), DataError);
}

}  // namespace
}  // namespace graphife
