#pragma once

#include "graphife/matrix.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace graphife {

/// Mutable view of one named trainable matrix.
struct ParamRef {
  std::string name;
  Matrix* value;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 penalty added to the gradient before the moment updates.
  double weight_decay = 0.0;
};

/// Per-parameter moments for one optimizer group.
struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::int64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place.
///
/// Moments are created (zero) on the first call and must keep the parameters' shapes afterwards.
/// Throws NumericError naming the parameter if a gradient holds NaN/Inf, ShapeError on shape
/// mismatch and ConfigError for lr <= 0.
void adam_step(std::span<const ParamRef> params, std::span<const Matrix> grads, AdamState& state,
               double lr);

}  // namespace graphife
