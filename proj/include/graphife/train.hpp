#pragma once

#include "graphife/adam.hpp"
#include "graphife/backbone.hpp"
#include "graphife/metrics.hpp"
#include "graphife/mixup.hpp"
#include "graphife/nld.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <climits>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace graphife {

enum class Method { kVanilla, kReweight, kUpsample, kGraphIfe, kGraphIfeLight };

Method parse_method(const std::string& name);
const char* method_name(Method m);
bool is_graphife(Method m);

struct TrainConfig {
  Method method = Method::kGraphIfe;
  LayerKind backbone = LayerKind::kGcn;
  std::int64_t hidden = 256;
  int epochs = 500;
  std::uint64_t seed = 0;
  double lr_ife = 1e-3;  ///< r1: encoder, invariant head, gate, invariant projector
  double lr_efe = 1e-2;  ///< r2: environment head and projector
  double lr_baseline = 1e-2;
  double weight_decay = 5e-4;
  double distance_ratio = 0.5;  ///< d
  double alpha = 0.5;           ///< gate regulation weight
  double dwa_temperature = 2.0; ///< t
  int warmup = 10;              ///< omega
  double beta = 2.0;            ///< mixup Beta(beta, beta)
  double light_epsilon = 0.1;
  /// Floor applied to -L_E in the environment objective.
  double env_loss_floor = -20.0;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json config_to_json(const TrainConfig& c);
/// Overlays keys present in `j` onto `base`; unknown keys are a ConfigError.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct LinearParams {
  Matrix weight;
  Matrix bias;  ///< 1 x out
};

LinearParams init_linear(std::int64_t in_dim, std::int64_t out_dim, Rng& rng);

struct LinearTensors {
  ad::Tensor weight;
  ad::Tensor bias;
};

LinearTensors record_linear(ad::Tape& tape, const LinearParams& p, bool trainable);
ad::Tensor linear(ad::Tensor x, const LinearTensors& p);

/// Every trainable matrix of the full model plus one optimizer state per phase.
struct ModelState {
  EncoderParams encoder;
  GnnLayerParams ife_head;
  GnnLayerParams efe_head;
  LinearParams gate;
  LinearParams proj_ife;
  LinearParams proj_efe;
  AdamState opt_ife;
  AdamState opt_efe;

  /// Phase-1 group (learning rate r1).
  std::vector<ParamRef> ife_group();
  /// Phase-2 group (learning rate r2).
  std::vector<ParamRef> efe_group();
  /// Encoder and invariant projector: the whole model of the baselines.
  std::vector<ParamRef> baseline_group();
};

ModelState init_model(const TrainConfig& config, std::int64_t in_dim, int classes);

nlohmann::json model_to_json(ModelState& m);
void model_from_json(const nlohmann::json& j, ModelState& m);

/// The model recorded on one tape.
struct ModelTensors {
  LayerTensors enc1;
  LayerTensors enc2;
  LayerTensors ife;
  LayerTensors efe;
  LinearTensors gate;
  LinearTensors proj_ife;
  LinearTensors proj_efe;
};

ModelTensors record_model(ad::Tape& tape, const ModelState& m, bool ife_trainable,
                          bool efe_trainable);

// ---- objective terms ----

/// Weighted cross-entropy of proj(F) on `rows` against `labels`.
ad::Tensor invariant_loss(ad::Tensor features, const LinearTensors& proj,
                          std::span<const std::int64_t> rows, std::span<const int> labels,
                          std::span<const double> weights);

/// Per train row: 1 if its cosine to the class mean is at least the class's average cosine,
/// else 1 + (average - cosine). Zero-norm rows score cosine 0.
std::vector<double> alignment_weights(const Matrix& features, std::span<const std::int64_t> rows,
                                      std::span<const int> labels);

struct GateOutput {
  ad::Tensor gate;   ///< n x d, in (0, 1)
  ad::Tensor mixed;  ///< F_I + gate * F_E
};

GateOutput gated_augment(ad::Tensor f_inv, ad::Tensor f_env, const LinearTensors& gate);

/// gated_augment for heads applied to `lift` z. A head is linear in its parameters, so the gate
/// pre-activation [F_I, F_E] W_g is one head with weight W_I W_top + W_E W_bottom.
GateOutput lifted_gated_augment(const GraphOperators& ops, std::shared_ptr<const SparseMatrix> lift,
                                ad::Tensor z, ad::Tensor f_inv, ad::Tensor f_env,
                                const LayerTensors& ife, const LayerTensors& efe,
                                const LinearTensors& gate);

ad::Tensor augmentation_loss(ad::Tensor mixed, const LinearTensors& proj,
                             std::span<const std::int64_t> rows, std::span<const int> labels);

/// Mean |g|.
ad::Tensor gate_regularizer(ad::Tensor gate);

/// Loss-ratio softmax weights over the last two epochs' (aligned invariant, augmentation)
/// losses; (1, 1) until two epochs are available. Sums to 2.
std::array<double, 2> dwa_weights(std::span<const std::array<double, 2>> history,
                                  double temperature);

ad::Tensor ife_objective(ad::Tensor l_if_aligned, ad::Tensor l_da, ad::Tensor g_reg,
                         std::array<double, 2> dwa, double alpha);

ad::Tensor environment_loss(ad::Tensor f_env, const LinearTensors& proj,
                            std::span<const std::int64_t> rows, std::span<const int> labels);

/// W(F_E, R_local) + W(F_E, R_global) over `rows`, with both references constants.
ad::Tensor distance_loss(ad::Tensor f_env, const Matrix& local_ref, const Matrix& global_ref,
                         std::span<const std::int64_t> rows);

/// Local reference: closed-neighborhood mean of Z'. Global: column mean of Z' on every row.
Matrix local_reference(const SparseMatrix& closed_mean, const Matrix& z_balanced);
Matrix global_reference(const Matrix& z_balanced);

/// max(-L_E, floor) + d L_DS.
ad::Tensor efe_objective(ad::Tensor l_env, ad::Tensor l_ds, double distance_ratio,
                         double floor = -20.0);

// ---- one epoch ----

/// Everything an epoch's losses need besides the parameters.
struct EpochContext {
  GraphOperators base;
  GraphOperators balanced;
  std::shared_ptr<const SparseMatrix> mixing;        ///< [I; M]
  std::shared_ptr<const SparseMatrix> closed_mean;   ///< on the balanced graph
  std::vector<std::int64_t> loss_rows;               ///< train rows of the balanced graph
  std::vector<int> loss_labels;
};

EpochContext make_epoch_context(const Graph& g, const GraphOperators& base_ops,
                                const ImbalancedSplit& split, const SynthesisPlan& plan,
                                const std::vector<char>* loss_mask);

struct PhaseOneTerms {
  ad::Tensor z;
  ad::Tensor l_if;
  ad::Tensor l_if_aligned;
  ad::Tensor l_da;
  ad::Tensor g_reg;
  ad::Tensor l_ife;
  ad::Tensor gate;
  std::vector<double> alignment;
};

/// Invariant-side losses. `alignment` overrides the weights computed from F_I.
PhaseOneTerms phase_one_losses(const EpochContext& ctx, const ModelTensors& t,
                               std::array<double, 2> dwa, double alpha,
                               const std::vector<double>* alignment = nullptr);

struct PhaseTwoTerms {
  ad::Tensor z;
  ad::Tensor l_env;
  ad::Tensor l_ds;
  ad::Tensor l_efe;
};

PhaseTwoTerms phase_two_losses(const EpochContext& ctx, const ModelTensors& t,
                               double distance_ratio, double floor = -20.0);

struct LossBundle {
  double l_if = 0.0;
  double l_if_aligned = 0.0;
  double l_da = 0.0;
  double g_reg = 0.0;
  double l_ife = 0.0;
  double l_env = 0.0;
  double l_ds = 0.0;
  double l_efe = 0.0;
  std::array<double, 2> dwa{1.0, 1.0};
  double gate_min = 0.0;
  double gate_max = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  LossBundle losses;
  ClassificationMetrics val;
};

/// Fixed inputs of a training run.
struct TrainingData {
  const Graph* graph = nullptr;
  const ImbalancedSplit* split = nullptr;
  GraphOperators ops;
  NldStats nld;
  std::vector<char> light_mask;  ///< empty unless Light mode
};

TrainingData prepare_training(const Graph& g, const ImbalancedSplit& split,
                              const TrainConfig& config);

/// Synthesis plan of `epoch`, with neighbors wired; same arguments give the same plan.
SynthesisPlan epoch_plan(const TrainingData& data, const TrainConfig& config, int epoch);

/// One GraphIFE epoch: resynthesize, phase 1 step, phase 2 step, validate.
EpochRecord train_epoch(ModelState& state, const TrainingData& data, const TrainConfig& config,
                        int epoch, std::vector<std::array<double, 2>>& dwa_history);

/// Logits on the original graph: proj(F_I) for GraphIFE methods, proj(Z) for the baselines.
Matrix predict_logits(const ModelState& state, const GraphOperators& ops, Method method);

struct FitResult {
  ModelState best;
  int best_epoch = -1;
  double best_val_bacc = -1.0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs config.epochs epochs and keeps the state with the highest validation bAcc (earliest on
/// ties). Works for every method.
FitResult fit(const Graph& g, const ImbalancedSplit& split, const TrainConfig& config,
              const EpochCallback& on_epoch = {});

/// Test-set metrics of a fitted state.
ClassificationMetrics evaluate(const FitResult& result, const Graph& g,
                               std::span<const std::int64_t> nodes, const TrainConfig& config);

/// Per-epoch CSV; doubles in shortest round-trip form.
std::string history_csv(const std::vector<EpochRecord>& history);

// ---- baselines ----

/// Loss rows and per-row weights of a baseline: inverse class frequency for reweight, round-robin
/// duplication of minority train nodes up to the majority count for upsample.
struct BaselineLossRows {
  std::vector<std::int64_t> rows;
  std::vector<int> labels;
  std::vector<double> weights;
};

BaselineLossRows baseline_loss_rows(const Graph& g, const ImbalancedSplit& split, Method method);

}  // namespace graphife
