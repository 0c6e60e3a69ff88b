#include "graphife/train.hpp"

#include "graphife/checkpoint.hpp"
#include "graphife/error.hpp"
#include "graphife/ops.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace graphife {

Method parse_method(const std::string& name) {
  if (name == "vanilla") return Method::kVanilla;
  if (name == "reweight") return Method::kReweight;
  if (name == "upsample") return Method::kUpsample;
  if (name == "graphife") return Method::kGraphIfe;
  if (name == "graphife-light") return Method::kGraphIfeLight;
  throw ConfigError("unknown method '" + name +
                    "' (expected vanilla, reweight, upsample, graphife or graphife-light)");
}

const char* method_name(Method m) {
  switch (m) {
    case Method::kVanilla: return "vanilla";
    case Method::kReweight: return "reweight";
    case Method::kUpsample: return "upsample";
    case Method::kGraphIfe: return "graphife";
    case Method::kGraphIfeLight: return "graphife-light";
  }
  return "unknown";
}

bool is_graphife(Method m) { return m == Method::kGraphIfe || m == Method::kGraphIfeLight; }

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(hidden >= 1, "hidden must be >= 1");
  need(epochs >= 0, "epochs must be >= 0");
  need(lr_ife > 0.0 && std::isfinite(lr_ife), "r1 must be > 0");
  need(lr_efe > 0.0 && std::isfinite(lr_efe), "r2 must be > 0");
  need(lr_baseline > 0.0 && std::isfinite(lr_baseline), "lr_baseline must be > 0");
  need(weight_decay >= 0.0, "weight_decay must be >= 0");
  need(distance_ratio >= 0.0, "d must be >= 0");
  need(alpha >= 0.0, "alpha must be >= 0");
  need(dwa_temperature > 0.0, "t must be > 0");
  need(warmup >= 0, "omega must be >= 0");
  need(beta > 0.0, "beta must be > 0");
  need(light_epsilon >= 0.0 && light_epsilon <= 1.0, "epsilon must lie in [0, 1]");
  need(env_loss_floor <= 0.0, "env_loss_floor must be <= 0");
}

nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["method"] = method_name(c.method);
  j["backbone"] = layer_kind_name(c.backbone);
  j["hidden"] = c.hidden;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["r1"] = c.lr_ife;
  j["r2"] = c.lr_efe;
  j["lr_baseline"] = c.lr_baseline;
  j["weight_decay"] = c.weight_decay;
  j["d"] = c.distance_ratio;
  j["alpha"] = c.alpha;
  j["t"] = c.dwa_temperature;
  j["omega"] = c.warmup;
  j["beta"] = c.beta;
  j["epsilon"] = c.light_epsilon;
  j["env_loss_floor"] = c.env_loss_floor;
  return nlohmann::json::parse(j.dump());
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "method") c.method = parse_method(v.get<std::string>());
      else if (key == "backbone") c.backbone = parse_layer_kind(v.get<std::string>());
      else if (key == "hidden") c.hidden = v.get<std::int64_t>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "r1") c.lr_ife = v.get<double>();
      else if (key == "r2") c.lr_efe = v.get<double>();
      else if (key == "lr_baseline") c.lr_baseline = v.get<double>();
      else if (key == "weight_decay") c.weight_decay = v.get<double>();
      else if (key == "d") c.distance_ratio = v.get<double>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "t") c.dwa_temperature = v.get<double>();
      else if (key == "omega") c.warmup = v.get<int>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "epsilon") c.light_epsilon = v.get<double>();
      else if (key == "env_loss_floor") c.env_loss_floor = v.get<double>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

LinearParams init_linear(std::int64_t in_dim, std::int64_t out_dim, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::uniform_real_distribution<double> u(-limit, limit);
  LinearParams p;
  p.weight.resize(in_dim, out_dim);
  for (Eigen::Index i = 0; i < p.weight.size(); ++i) p.weight.data()[i] = u(rng);
  p.bias = Matrix::Zero(1, out_dim);
  return p;
}

LinearTensors record_linear(ad::Tape& tape, const LinearParams& p, bool trainable) {
  return {trainable ? tape.variable(p.weight) : tape.constant(p.weight),
          trainable ? tape.variable(p.bias) : tape.constant(p.bias)};
}

ad::Tensor linear(ad::Tensor x, const LinearTensors& p) {
  return ad::add(ad::matmul(x, p.weight), p.bias);
}

std::vector<ParamRef> ModelState::ife_group() {
  std::vector<ParamRef> out;
  append_params(encoder, "encoder", out);
  append_params(ife_head, "ife_head", out);
  out.push_back({"gate.weight", &gate.weight});
  out.push_back({"gate.bias", &gate.bias});
  out.push_back({"proj_ife.weight", &proj_ife.weight});
  out.push_back({"proj_ife.bias", &proj_ife.bias});
  return out;
}

std::vector<ParamRef> ModelState::efe_group() {
  std::vector<ParamRef> out;
  append_params(efe_head, "efe_head", out);
  out.push_back({"proj_efe.weight", &proj_efe.weight});
  out.push_back({"proj_efe.bias", &proj_efe.bias});
  return out;
}

std::vector<ParamRef> ModelState::baseline_group() {
  std::vector<ParamRef> out;
  append_params(encoder, "encoder", out);
  out.push_back({"proj_ife.weight", &proj_ife.weight});
  out.push_back({"proj_ife.bias", &proj_ife.bias});
  return out;
}

ModelState init_model(const TrainConfig& config, std::int64_t in_dim, int classes) {
  config.validate();
  if (classes < 1) throw ConfigError("model needs at least one class");
  Rng rng = derive_rng(config.seed, 0, "init");
  ModelState m;
  const auto h = config.hidden;
  m.encoder = init_encoder(config.backbone, in_dim, h, rng);
  m.ife_head = init_layer(config.backbone, h, h, rng);
  m.efe_head = init_layer(config.backbone, h, h, rng);
  m.gate = init_linear(2 * h, h, rng);
  m.proj_ife = init_linear(h, classes, rng);
  m.proj_efe = init_linear(h, classes, rng);
  m.opt_ife.config.weight_decay = config.weight_decay;
  m.opt_efe.config.weight_decay = config.weight_decay;
  return m;
}

nlohmann::json model_to_json(ModelState& m) {
  nlohmann::json j;
  auto ife = m.ife_group();
  auto efe = m.efe_group();
  j["backbone"] = layer_kind_name(m.encoder.layer1.kind);
  nlohmann::json params = params_to_json(ife);
  params.update(params_to_json(efe));
  j["parameters"] = std::move(params);
  j["optimizers"]["ife"] = adam_to_json(m.opt_ife);
  j["optimizers"]["efe"] = adam_to_json(m.opt_efe);
  return j;
}

void model_from_json(const nlohmann::json& j, ModelState& m) {
  try {
    params_from_json(j.at("parameters"), m.ife_group());
    params_from_json(j.at("parameters"), m.efe_group());
    m.opt_ife = adam_from_json(j.at("optimizers").at("ife"));
    m.opt_efe = adam_from_json(j.at("optimizers").at("efe"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

ModelTensors record_model(ad::Tape& tape, const ModelState& m, bool ife_trainable,
                          bool efe_trainable) {
  ModelTensors t;
  t.enc1 = record_layer(tape, m.encoder.layer1, ife_trainable);
  t.enc2 = record_layer(tape, m.encoder.layer2, ife_trainable);
  t.ife = record_layer(tape, m.ife_head, ife_trainable);
  t.efe = record_layer(tape, m.efe_head, efe_trainable);
  t.gate = record_linear(tape, m.gate, ife_trainable);
  t.proj_ife = record_linear(tape, m.proj_ife, ife_trainable);
  t.proj_efe = record_linear(tape, m.proj_efe, efe_trainable);
  return t;
}

namespace {

// Tensors in ModelState::ife_group() / efe_group() / baseline_group() order.
std::vector<ad::Tensor> ife_tensors(const ModelTensors& t) {
  return {t.enc1.weight, t.enc1.bias, t.enc2.weight, t.enc2.bias, t.ife.weight,
          t.ife.bias,    t.gate.weight, t.gate.bias, t.proj_ife.weight, t.proj_ife.bias};
}

std::vector<ad::Tensor> efe_tensors(const ModelTensors& t) {
  return {t.efe.weight, t.efe.bias, t.proj_efe.weight, t.proj_efe.bias};
}

std::vector<Matrix> gradients(const ad::Tape& tape, const std::vector<ad::Tensor>& ts) {
  std::vector<Matrix> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(tape.grad(t));
  return out;
}

}  // namespace

ad::Tensor invariant_loss(ad::Tensor features, const LinearTensors& proj,
                          std::span<const std::int64_t> rows, std::span<const int> labels,
                          std::span<const double> weights) {
  return ad::weighted_cross_entropy(linear(ad::row_gather(features, rows), proj), labels, weights);
}

std::vector<double> alignment_weights(const Matrix& features, std::span<const std::int64_t> rows,
                                      std::span<const int> labels) {
  if (rows.size() != labels.size()) {
    throw ShapeError("alignment_weights: " + std::to_string(rows.size()) + " rows for " +
                     std::to_string(labels.size()) + " labels");
  }
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  const auto d = features.cols();
  Matrix mean = Matrix::Zero(classes, d);
  std::vector<std::int64_t> count(static_cast<std::size_t>(classes), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    mean.row(labels[i]) += features.row(rows[i]);
    ++count[static_cast<std::size_t>(labels[i])];
  }
  for (int c = 0; c < classes; ++c) {
    if (count[static_cast<std::size_t>(c)] > 0) mean.row(c) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
  }
  std::vector<double> sim(rows.size(), 0.0);
  std::vector<double> sim_mean(static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto f = features.row(rows[i]);
    const auto m = mean.row(labels[i]);
    const double denom = f.norm() * m.norm();
    sim[i] = denom > 0.0 ? std::clamp(f.dot(m) / denom, -1.0, 1.0) : 0.0;
    sim_mean[static_cast<std::size_t>(labels[i])] += sim[i];
  }
  for (int c = 0; c < classes; ++c) {
    if (count[static_cast<std::size_t>(c)] > 0) sim_mean[static_cast<std::size_t>(c)] /= static_cast<double>(count[static_cast<std::size_t>(c)]);
  }
  std::vector<double> w(rows.size(), 1.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double s_m = sim_mean[static_cast<std::size_t>(labels[i])];
    if (sim[i] < s_m) w[i] = 1.0 + (s_m - sim[i]);
  }
  return w;
}

GateOutput gated_augment(ad::Tensor f_inv, ad::Tensor f_env, const LinearTensors& gate) {
  if (f_inv.rows() != f_env.rows() || f_inv.cols() != f_env.cols()) {
    throw ShapeError("gated_augment: F_I " + shape_string(f_inv.rows(), f_inv.cols()) + " vs F_E " +
                     shape_string(f_env.rows(), f_env.cols()));
  }
  GateOutput out;
  out.gate = ad::sigmoid(linear(ad::concat_cols(f_inv, f_env), gate));
  out.mixed = ad::add(f_inv, ad::elementwise_mul(out.gate, f_env));
  return out;
}

GateOutput lifted_gated_augment(const GraphOperators& ops, std::shared_ptr<const SparseMatrix> lift,
                                ad::Tensor z, ad::Tensor f_inv, ad::Tensor f_env,
                                const LayerTensors& ife, const LayerTensors& efe,
                                const LinearTensors& gate) {
  const Eigen::Index d = f_inv.cols();
  if (f_env.rows() != f_inv.rows() || f_env.cols() != d || gate.weight.rows() != 2 * d) {
    throw ShapeError("lifted_gated_augment: F_I " + shape_string(f_inv.rows(), d) + ", F_E " +
                     shape_string(f_env.rows(), f_env.cols()) + ", gate weight " +
                     shape_string(gate.weight.rows(), gate.weight.cols()));
  }
  std::vector<std::int64_t> top(static_cast<std::size_t>(d));
  std::iota(top.begin(), top.end(), 0);
  std::vector<std::int64_t> bottom(top.size());
  std::iota(bottom.begin(), bottom.end(), d);
  const ad::Tensor w_top = ad::row_gather(gate.weight, top);
  const ad::Tensor w_bottom = ad::row_gather(gate.weight, bottom);
  LayerTensors combined;
  combined.kind = ife.kind;
  combined.weight = ad::add(ad::matmul(ife.weight, w_top), ad::matmul(efe.weight, w_bottom));
  combined.bias = ad::add(ad::add(ad::matmul(ife.bias, w_top), ad::matmul(efe.bias, w_bottom)), gate.bias);
  GateOutput out;
  out.gate = ad::sigmoid(extract_lifted(ops, std::move(lift), z, combined));
  out.mixed = ad::add(f_inv, ad::elementwise_mul(out.gate, f_env));
  return out;
}

ad::Tensor augmentation_loss(ad::Tensor mixed, const LinearTensors& proj,
                             std::span<const std::int64_t> rows, std::span<const int> labels) {
  return ad::cross_entropy(linear(ad::row_gather(mixed, rows), proj), labels);
}

ad::Tensor gate_regularizer(ad::Tensor gate) { return ad::abs_mean(gate); }

std::array<double, 2> dwa_weights(std::span<const std::array<double, 2>> history,
                                  double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("DWA temperature must be > 0");
  if (history.size() < 2) return {1.0, 1.0};
  const auto& prev = history[history.size() - 1];
  const auto& prev2 = history[history.size() - 2];
  std::array<double, 2> r{};
  for (int k = 0; k < 2; ++k) r[k] = prev2[k] != 0.0 ? prev[k] / prev2[k] : 1.0;
  // Shift by the max before exponentiating; the ratio is unchanged.
  const double top = std::max(r[0], r[1]) / temperature;
  const double e0 = std::exp(r[0] / temperature - top);
  const double e1 = std::exp(r[1] / temperature - top);
  return {2.0 * e0 / (e0 + e1), 2.0 * e1 / (e0 + e1)};
}

ad::Tensor ife_objective(ad::Tensor l_if_aligned, ad::Tensor l_da, ad::Tensor g_reg,
                         std::array<double, 2> dwa, double alpha) {
  return ad::add(ad::add(ad::scalar_mul(l_if_aligned, dwa[0]), ad::scalar_mul(l_da, dwa[1])),
                 ad::scalar_mul(g_reg, alpha));
}

ad::Tensor environment_loss(ad::Tensor f_env, const LinearTensors& proj,
                            std::span<const std::int64_t> rows, std::span<const int> labels) {
  return ad::cross_entropy(linear(ad::row_gather(f_env, rows), proj), labels);
}

Matrix local_reference(const SparseMatrix& closed_mean, const Matrix& z_balanced) {
  return closed_mean.multiply(z_balanced);
}

Matrix global_reference(const Matrix& z_balanced) {
  const Eigen::RowVectorXd mu = z_balanced.colwise().mean();
  return mu.replicate(z_balanced.rows(), 1);
}

ad::Tensor distance_loss(ad::Tensor f_env, const Matrix& local_ref, const Matrix& global_ref,
                         std::span<const std::int64_t> rows) {
  ad::Tape& tape = f_env.tape();
  auto gather = [&](const Matrix& m) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return tape.constant(std::move(out));
  };
  ad::Tensor f = ad::row_gather(f_env, rows);
  return ad::add(ad::sliced_wasserstein(f, gather(local_ref)),
                 ad::sliced_wasserstein(f, gather(global_ref)));
}

ad::Tensor efe_objective(ad::Tensor l_env, ad::Tensor l_ds, double distance_ratio, double floor) {
  return ad::add(ad::clamp_min(ad::scalar_mul(l_env, -1.0), floor),
                 ad::scalar_mul(l_ds, distance_ratio));
}

EpochContext make_epoch_context(const Graph& g, const GraphOperators& base_ops,
                                const ImbalancedSplit& split, const SynthesisPlan& plan,
                                const std::vector<char>* loss_mask) {
  BalancedGraph b = build_balanced_topology(g, split, plan);
  EpochContext ctx;
  ctx.base = base_ops;
  ctx.balanced.gcn = std::make_shared<const SparseMatrix>(gcn_normalize(b.graph));
  ctx.balanced.mean = std::make_shared<const SparseMatrix>(mean_aggregator(b.graph));
  ctx.mixing = std::make_shared<const SparseMatrix>(mixing_operator(plan));
  ctx.closed_mean = std::make_shared<const SparseMatrix>(closed_mean_aggregator(b.graph));
  for (auto v : b.split.train) {
    if (loss_mask != nullptr && v < g.num_nodes() && !(*loss_mask)[static_cast<std::size_t>(v)]) continue;
    ctx.loss_rows.push_back(v);
    ctx.loss_labels.push_back(b.graph.label(v));
  }
  return ctx;
}

PhaseOneTerms phase_one_losses(const EpochContext& ctx, const ModelTensors& t,
                               std::array<double, 2> dwa, double alpha,
                               const std::vector<double>* alignment) {
  PhaseOneTerms out;
  out.z = encode(ctx.base, t.enc1, t.enc2);
  ad::Tensor f_inv = extract_lifted(ctx.balanced, ctx.mixing, out.z, t.ife);
  ad::Tensor f_env = extract_lifted(ctx.balanced, ctx.mixing, out.z, t.efe);
  out.alignment = alignment != nullptr ? *alignment
                                       : alignment_weights(f_inv.value(), ctx.loss_rows, ctx.loss_labels);
  const std::vector<double> ones(ctx.loss_rows.size(), 1.0);
  out.l_if = invariant_loss(f_inv, t.proj_ife, ctx.loss_rows, ctx.loss_labels, ones);
  out.l_if_aligned = invariant_loss(f_inv, t.proj_ife, ctx.loss_rows, ctx.loss_labels, out.alignment);
  GateOutput gate = lifted_gated_augment(ctx.balanced, ctx.mixing, out.z, f_inv, f_env, t.ife, t.efe, t.gate);
  out.gate = gate.gate;
  out.l_da = augmentation_loss(gate.mixed, t.proj_ife, ctx.loss_rows, ctx.loss_labels);
  out.g_reg = gate_regularizer(gate.gate);
  out.l_ife = ife_objective(out.l_if_aligned, out.l_da, out.g_reg, dwa, alpha);
  return out;
}

PhaseTwoTerms phase_two_losses(const EpochContext& ctx, const ModelTensors& t,
                               double distance_ratio, double floor) {
  PhaseTwoTerms out;
  out.z = encode(ctx.base, t.enc1, t.enc2);
  ad::Tensor f_env = extract_lifted(ctx.balanced, ctx.mixing, out.z, t.efe);
  out.l_env = environment_loss(f_env, t.proj_efe, ctx.loss_rows, ctx.loss_labels);
  const Matrix zb = ctx.mixing->multiply(out.z.value());
  const Matrix local = local_reference(*ctx.closed_mean, zb);
  const Matrix global = global_reference(zb);
  out.l_ds = distance_loss(f_env, local, global, ctx.loss_rows);
  out.l_efe = efe_objective(out.l_env, out.l_ds, distance_ratio, floor);
  return out;
}

namespace {

// Activations are allocated and freed every epoch; keep them on the heap instead of
// round-tripping through mmap.
void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

TrainingData prepare_training(const Graph& g, const ImbalancedSplit& split,
                              const TrainConfig& config) {
  TrainingData data;
  data.graph = &g;
  data.split = &split;
  data.ops = make_operators(g);
  data.nld = neighbor_label_stats(g, split);
  if (config.method == Method::kGraphIfeLight) {
    data.light_mask = light_filter(g, split, data.nld, config.light_epsilon);
  }
  return data;
}

SynthesisPlan epoch_plan(const TrainingData& data, const TrainConfig& config, int epoch) {
  Rng rng = derive_rng(config.seed, static_cast<std::uint64_t>(epoch), "synthesis");
  const bool light = config.method == Method::kGraphIfeLight;
  SynthesisPlan plan = plan_synthesis(*data.graph, *data.split, config.beta, rng,
                                      light ? &data.light_mask : nullptr);
  // Light mode keeps duplicating anchor neighborhoods for the whole run.
  const int warmup = light ? INT_MAX : config.warmup;
  wire_neighbors(plan, *data.graph, *data.split, data.nld, epoch, warmup, rng);
  return plan;
}

namespace {

ClassificationMetrics score(const Matrix& logits, const Graph& g,
                            std::span<const std::int64_t> nodes) {
  std::vector<int> preds;
  std::vector<int> labels;
  preds.reserve(nodes.size());
  labels.reserve(nodes.size());
  for (auto v : nodes) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(v, j) > logits(v, best)) best = j;
    }
    preds.push_back(static_cast<int>(best));
    labels.push_back(g.label(v));
  }
  return classification_metrics(preds, labels, g.class_count());
}

// Invariant-path logits from an already computed Z.
Matrix invariant_logits(const ModelState& s, const GraphOperators& ops, const Matrix& z) {
  ad::Tape tape;
  LayerTensors head = record_layer(tape, s.ife_head, false);
  LinearTensors proj = record_linear(tape, s.proj_ife, false);
  return linear(extract(ops, tape.constant(z), head), proj).value();
}

std::string epoch_context(int epoch, const std::string& what) {
  return "epoch " + std::to_string(epoch) + ": " + what;
}

}  // namespace

EpochRecord train_epoch(ModelState& state, const TrainingData& data, const TrainConfig& config,
                        int epoch, std::vector<std::array<double, 2>>& dwa_history) {
  EpochRecord rec;
  rec.epoch = epoch;
  try {
    const SynthesisPlan plan = epoch_plan(data, config, epoch);
    const EpochContext ctx = make_epoch_context(
        *data.graph, data.ops, *data.split, plan,
        config.method == Method::kGraphIfeLight ? &data.light_mask : nullptr);
    LossBundle& b = rec.losses;
    b.dwa = dwa_weights(dwa_history, config.dwa_temperature);

    {
      ad::Tape tape;
      ModelTensors t = record_model(tape, state, true, false);
      PhaseOneTerms p1 = phase_one_losses(ctx, t, b.dwa, config.alpha);
      b.l_if = p1.l_if.item();
      b.l_if_aligned = p1.l_if_aligned.item();
      b.l_da = p1.l_da.item();
      b.g_reg = p1.g_reg.item();
      b.l_ife = p1.l_ife.item();
      b.gate_min = p1.gate.value().minCoeff();
      b.gate_max = p1.gate.value().maxCoeff();
      tape.backward(p1.l_ife);
      const auto grads = gradients(tape, ife_tensors(t));
      adam_step(state.ife_group(), grads, state.opt_ife, config.lr_ife);
    }
    dwa_history.push_back({b.l_if_aligned, b.l_da});

    Matrix z;
    {
      ad::Tape tape;
      ModelTensors t = record_model(tape, state, false, true);
      PhaseTwoTerms p2 = phase_two_losses(ctx, t, config.distance_ratio, config.env_loss_floor);
      b.l_env = p2.l_env.item();
      b.l_ds = p2.l_ds.item();
      b.l_efe = p2.l_efe.item();
      tape.backward(p2.l_efe);
      const auto grads = gradients(tape, efe_tensors(t));
      adam_step(state.efe_group(), grads, state.opt_efe, config.lr_efe);
      z = p2.z.value();
    }
    // Phase 2 leaves the encoder and the invariant path untouched, so its Z is current.
    rec.val = score(invariant_logits(state, data.ops, z), *data.graph, data.split->val);
  } catch (const NumericError& e) {
    throw NumericError(epoch_context(epoch, e.what()));
  }
  return rec;
}

Matrix predict_logits(const ModelState& state, const GraphOperators& ops, Method method) {
  ad::Tape tape;
  LayerTensors l1 = record_layer(tape, state.encoder.layer1, false);
  LayerTensors l2 = record_layer(tape, state.encoder.layer2, false);
  ad::Tensor z = encode(ops, l1, l2);
  if (is_graphife(method)) return invariant_logits(state, ops, z.value());
  return linear(z, record_linear(tape, state.proj_ife, false)).value();
}

BaselineLossRows baseline_loss_rows(const Graph& g, const ImbalancedSplit& split, Method method) {
  BaselineLossRows out;
  const auto classes = static_cast<std::size_t>(g.class_count());
  std::vector<std::vector<std::int64_t>> by_class(classes);
  for (auto v : split.train) by_class[static_cast<std::size_t>(g.label(v))].push_back(v);
  std::size_t majority = 0;
  std::size_t present = 0;
  for (const auto& m : by_class) {
    majority = std::max(majority, m.size());
    present += m.empty() ? 0 : 1;
  }
  for (auto v : split.train) {
    out.rows.push_back(v);
    out.labels.push_back(g.label(v));
    double w = 1.0;
    if (method == Method::kReweight) {
      const auto n_c = by_class[static_cast<std::size_t>(g.label(v))].size();
      w = static_cast<double>(split.train.size()) / static_cast<double>(present * n_c);
    }
    out.weights.push_back(w);
  }
  if (method == Method::kUpsample) {
    for (std::size_t c = 0; c < classes; ++c) {
      const auto& m = by_class[c];
      if (m.empty()) continue;
      for (std::size_t k = m.size(); k < majority; ++k) {
        out.rows.push_back(m[k % m.size()]);
        out.labels.push_back(static_cast<int>(c));
        out.weights.push_back(1.0);
      }
    }
  }
  return out;
}

namespace {

EpochRecord baseline_epoch(ModelState& state, const GraphOperators& ops, const Graph& g,
                           const ImbalancedSplit& split, const BaselineLossRows& rows,
                           const TrainConfig& config, int epoch) {
  EpochRecord rec;
  rec.epoch = epoch;
  try {
    ad::Tape tape;
    LayerTensors l1 = record_layer(tape, state.encoder.layer1, true);
    LayerTensors l2 = record_layer(tape, state.encoder.layer2, true);
    LinearTensors proj = record_linear(tape, state.proj_ife, true);
    ad::Tensor z = encode(ops, l1, l2);
    ad::Tensor loss = invariant_loss(z, proj, rows.rows, rows.labels, rows.weights);
    rec.losses.l_if = loss.item();
    rec.losses.l_if_aligned = loss.item();
    tape.backward(loss);
    const auto grads = gradients(tape, {l1.weight, l1.bias, l2.weight, l2.bias, proj.weight, proj.bias});
    adam_step(state.baseline_group(), grads, state.opt_ife, config.lr_baseline);
    rec.val = score(predict_logits(state, ops, config.method), g, split.val);
  } catch (const NumericError& e) {
    throw NumericError(epoch_context(epoch, e.what()));
  }
  return rec;
}

}  // namespace

FitResult fit(const Graph& g, const ImbalancedSplit& split, const TrainConfig& config,
              const EpochCallback& on_epoch) {
  config.validate();
  keep_large_blocks_on_heap();
  if (split.val.empty() && config.epochs > 0) throw ConfigError("fit needs a non-empty validation set");
  FitResult result;
  ModelState state = init_model(config, g.feature_dim(), g.class_count());
  result.best = state;
  auto keep = [&](const EpochRecord& rec) {
    result.history.push_back(rec);
    if (rec.val.balanced_accuracy > result.best_val_bacc) {
      result.best_val_bacc = rec.val.balanced_accuracy;
      result.best_epoch = rec.epoch;
      result.best = state;
    }
    if (on_epoch) on_epoch(rec);
  };
  if (is_graphife(config.method)) {
    const TrainingData data = prepare_training(g, split, config);
    std::vector<std::array<double, 2>> dwa_history;
    for (int e = 0; e < config.epochs; ++e) keep(train_epoch(state, data, config, e, dwa_history));
  } else {
    const GraphOperators ops = make_operators(g);
    const BaselineLossRows rows = baseline_loss_rows(g, split, config.method);
    for (int e = 0; e < config.epochs; ++e) keep(baseline_epoch(state, ops, g, split, rows, config, e));
  }
  return result;
}

ClassificationMetrics evaluate(const FitResult& result, const Graph& g,
                               std::span<const std::int64_t> nodes, const TrainConfig& config) {
  return score(predict_logits(result.best, make_operators(g), config.method), g, nodes);
}

namespace {

void put(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out =
      "epoch,L_IF,L'_IF,L_DA,g_reg,L_IFE,L_E,L_DS,L_EFE,w_d1,w_d2,val_acc,val_bacc,val_f1\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch);
    const auto& b = r.losses;
    for (double v : {b.l_if, b.l_if_aligned, b.l_da, b.g_reg, b.l_ife, b.l_env, b.l_ds, b.l_efe,
                     b.dwa[0], b.dwa[1], r.val.accuracy, r.val.balanced_accuracy, r.val.macro_f1}) {
      out += ',';
      put(out, v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace graphife
