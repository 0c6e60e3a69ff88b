#include "graphife/adam.hpp"

#include "graphife/error.hpp"

#include <cmath>

namespace graphife {

void adam_step(std::span<const ParamRef> params, std::span<const Matrix> grads, AdamState& state,
               double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!same_shape(*params[i].value, grads[i])) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params[i].name);
    }
    require_finite(grads[i], "adam_step gradient of " + params[i].name);
  }
  if (state.step == 0 && state.first_moment.empty()) {
    for (const ParamRef& p : params) {
      state.first_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
      state.second_moment.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state holds " +
                     std::to_string(state.first_moment.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& theta = *params[i].value;
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    if (!same_shape(m, theta)) throw ShapeError("adam_step: moment shape mismatch for " + params[i].name);
    Matrix g = grads[i];
    if (c.weight_decay != 0.0) g += c.weight_decay * theta;
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + c.epsilon);
    require_finite(theta, "adam_step update of " + params[i].name);
  }
}

}  // namespace graphife
