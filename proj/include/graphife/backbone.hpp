#pragma once

#include "graphife/adam.hpp"
#include "graphife/autodiff.hpp"
#include "graphife/graph.hpp"
#include "graphife/rng.hpp"

#include <memory>
#include <string>
#include <vector>

namespace graphife {

enum class LayerKind { kGcn, kSage };

LayerKind parse_layer_kind(const std::string& name);
const char* layer_kind_name(LayerKind kind);

/// One message-passing layer. SAGE weights stack [W_self; W_neighbor] (2 d_in rows).
struct GnnLayerParams {
  LayerKind kind = LayerKind::kGcn;
  Matrix weight;
  Matrix bias;  ///< 1 x d_out

  std::int64_t in_dim() const;
  std::int64_t out_dim() const { return weight.cols(); }
};

struct EncoderParams {
  GnnLayerParams layer1;
  GnnLayerParams layer2;

  std::int64_t hidden_dim() const { return layer2.out_dim(); }
};

/// Glorot-uniform weight, zero bias.
GnnLayerParams init_layer(LayerKind kind, std::int64_t in_dim, std::int64_t out_dim, Rng& rng);
EncoderParams init_encoder(LayerKind kind, std::int64_t in_dim, std::int64_t hidden_dim, Rng& rng);

/// Sparse propagation operators of one graph, shared by every layer that runs on it.
struct GraphOperators {
  std::shared_ptr<const SparseMatrix> gcn;   ///< D^{-1/2}(A+I)D^{-1/2}
  std::shared_ptr<const SparseMatrix> mean;  ///< D^{-1} A
  std::shared_ptr<const SparseMatrix> features;
};

GraphOperators make_operators(const Graph& g);

/// A layer's parameters recorded on a tape.
struct LayerTensors {
  LayerKind kind = LayerKind::kGcn;
  ad::Tensor weight;
  ad::Tensor bias;
};

/// Records `p` as variables (or constants when `trainable` is false).
LayerTensors record_layer(ad::Tape& tape, const GnnLayerParams& p, bool trainable);

/// A (h W) + b.
ad::Tensor gcn_layer(std::shared_ptr<const SparseMatrix> adj_norm, ad::Tensor h,
                     const LayerTensors& p);
/// [h, mean_N(h)] W + b, with a zero neighbor mean for isolated nodes.
ad::Tensor sage_layer(std::shared_ptr<const SparseMatrix> mean_agg, ad::Tensor h,
                      const LayerTensors& p);
/// Dispatches on p.kind.
ad::Tensor apply_layer(const GraphOperators& ops, ad::Tensor h, const LayerTensors& p);

/// Z = layer2(relu(layer1(X))). The first layer reads the features in sparse form.
ad::Tensor encode(const GraphOperators& ops, const LayerTensors& layer1,
                  const LayerTensors& layer2);
/// Linear single-layer head over a (balanced) graph.
ad::Tensor extract(const GraphOperators& ops, ad::Tensor z, const LayerTensors& head);
/// extract(ops, lift z, head), with the weight product taken before `lift` so the dense work
/// runs at z's row count.
ad::Tensor extract_lifted(const GraphOperators& ops, std::shared_ptr<const SparseMatrix> lift,
                          ad::Tensor z, const LayerTensors& head);

/// Named views used by the optimizer and the checkpoint file.
void append_params(GnnLayerParams& p, const std::string& prefix, std::vector<ParamRef>& out);
void append_params(EncoderParams& p, const std::string& prefix, std::vector<ParamRef>& out);

}  // namespace graphife
