#include "graphife/backbone.hpp"

#include "graphife/error.hpp"
#include "graphife/ops.hpp"

#include <cmath>
#include <numeric>

namespace graphife {

LayerKind parse_layer_kind(const std::string& name) {
  if (name == "gcn") return LayerKind::kGcn;
  if (name == "sage") return LayerKind::kSage;
  throw ConfigError("unknown backbone '" + name + "' (expected gcn or sage)");
}

const char* layer_kind_name(LayerKind kind) { return kind == LayerKind::kGcn ? "gcn" : "sage"; }

std::int64_t GnnLayerParams::in_dim() const {
  return kind == LayerKind::kSage ? weight.rows() / 2 : weight.rows();
}

GnnLayerParams init_layer(LayerKind kind, std::int64_t in_dim, std::int64_t out_dim, Rng& rng) {
  const std::int64_t rows = kind == LayerKind::kSage ? 2 * in_dim : in_dim;
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + out_dim));
  std::uniform_real_distribution<double> u(-limit, limit);
  GnnLayerParams p;
  p.kind = kind;
  p.weight.resize(rows, out_dim);
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = u(rng);
  p.bias = Matrix::Zero(1, out_dim);
  return p;
}

EncoderParams init_encoder(LayerKind kind, std::int64_t in_dim, std::int64_t hidden_dim,
                           Rng& rng) {
  EncoderParams p;
  p.layer1 = init_layer(kind, in_dim, hidden_dim, rng);
  p.layer2 = init_layer(kind, hidden_dim, hidden_dim, rng);
  return p;
}

GraphOperators make_operators(const Graph& g) {
  GraphOperators ops;
  ops.gcn = std::make_shared<const SparseMatrix>(gcn_normalize(g));
  ops.mean = std::make_shared<const SparseMatrix>(mean_aggregator(g));
  ops.features = g.sparse_features();
  return ops;
}

LayerTensors record_layer(ad::Tape& tape, const GnnLayerParams& p, bool trainable) {
  LayerTensors t;
  t.kind = p.kind;
  t.weight = trainable ? tape.variable(p.weight) : tape.constant(p.weight);
  t.bias = trainable ? tape.variable(p.bias) : tape.constant(p.bias);
  return t;
}

namespace {

std::vector<std::int64_t> row_range(std::int64_t begin, std::int64_t end) {
  std::vector<std::int64_t> r(static_cast<std::size_t>(end - begin));
  std::iota(r.begin(), r.end(), begin);
  return r;
}

struct SageHalves {
  ad::Tensor self;
  ad::Tensor neighbor;
};

SageHalves split_sage_weight(const LayerTensors& p) {
  const auto rows = p.weight.rows();
  if (rows % 2 != 0) {
    throw ShapeError("sage_layer: weight needs an even row count, got " + std::to_string(rows));
  }
  return {ad::row_gather(p.weight, row_range(0, rows / 2)),
          ad::row_gather(p.weight, row_range(rows / 2, rows))};
}

}  // namespace

ad::Tensor gcn_layer(std::shared_ptr<const SparseMatrix> adj_norm, ad::Tensor h,
                     const LayerTensors& p) {
  return ad::add(ad::spmm(std::move(adj_norm), ad::matmul(h, p.weight)), p.bias);
}

ad::Tensor sage_layer(std::shared_ptr<const SparseMatrix> mean_agg, ad::Tensor h,
                      const LayerTensors& p) {
  const SageHalves w = split_sage_weight(p);
  if (h.cols() != w.self.rows()) {
    throw ShapeError("sage_layer: input width " + std::to_string(h.cols()) + " vs weight rows " +
                     std::to_string(p.weight.rows()));
  }
  ad::Tensor self = ad::matmul(h, w.self);
  ad::Tensor neigh = ad::spmm(std::move(mean_agg), ad::matmul(h, w.neighbor));
  return ad::add(ad::add(self, neigh), p.bias);
}

ad::Tensor apply_layer(const GraphOperators& ops, ad::Tensor h, const LayerTensors& p) {
  return p.kind == LayerKind::kGcn ? gcn_layer(ops.gcn, h, p) : sage_layer(ops.mean, h, p);
}

ad::Tensor encode(const GraphOperators& ops, const LayerTensors& layer1,
                  const LayerTensors& layer2) {
  if (!ops.features) throw ShapeError("encode: operators carry no features");
  ad::Tensor h;
  if (layer1.kind == LayerKind::kGcn) {
    if (ops.features->cols() != layer1.weight.rows()) {
      throw ShapeError("encode: feature width " + std::to_string(ops.features->cols()) +
                       " vs layer1 weight rows " + std::to_string(layer1.weight.rows()));
    }
    h = ad::add(ad::spmm(ops.gcn, ad::spmm(ops.features, layer1.weight)), layer1.bias);
  } else {
    const SageHalves w = split_sage_weight(layer1);
    if (ops.features->cols() != w.self.rows()) {
      throw ShapeError("encode: feature width " + std::to_string(ops.features->cols()) +
                       " vs sage layer1 input " + std::to_string(w.self.rows()));
    }
    ad::Tensor self = ad::spmm(ops.features, w.self);
    ad::Tensor neigh = ad::spmm(ops.mean, ad::spmm(ops.features, w.neighbor));
    h = ad::add(ad::add(self, neigh), layer1.bias);
  }
  return apply_layer(ops, ad::relu(h), layer2);
}

ad::Tensor extract(const GraphOperators& ops, ad::Tensor z, const LayerTensors& head) {
  return apply_layer(ops, z, head);
}

ad::Tensor extract_lifted(const GraphOperators& ops, std::shared_ptr<const SparseMatrix> lift,
                          ad::Tensor z, const LayerTensors& head) {
  if (head.kind == LayerKind::kGcn) {
    return ad::add(ad::spmm(ops.gcn, ad::spmm(lift, ad::matmul(z, head.weight))), head.bias);
  }
  const SageHalves w = split_sage_weight(head);
  ad::Tensor self = ad::spmm(lift, ad::matmul(z, w.self));
  ad::Tensor neigh = ad::spmm(ops.mean, ad::spmm(lift, ad::matmul(z, w.neighbor)));
  return ad::add(ad::add(self, neigh), head.bias);
}

void append_params(GnnLayerParams& p, const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &p.weight});
  out.push_back({prefix + ".bias", &p.bias});
}

void append_params(EncoderParams& p, const std::string& prefix, std::vector<ParamRef>& out) {
  append_params(p.layer1, prefix + ".layer1", out);
  append_params(p.layer2, prefix + ".layer2", out);
}

}  // namespace graphife
