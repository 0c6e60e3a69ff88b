#include "graphife/metrics.hpp"

#include "graphife/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace graphife {

ClassificationMetrics classification_metrics(std::span<const int> predictions,
                                             std::span<const int> labels, int class_count) {
  if (predictions.size() != labels.size()) {
    throw ShapeError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw DataError("metrics: no labels to score");
  ClassificationMetrics m;
  const auto c = static_cast<std::size_t>(class_count);
  std::vector<std::int64_t> tp(c, 0);
  std::vector<std::int64_t> label_count(c, 0);
  std::vector<std::int64_t> pred_count(c, 0);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if (y < 0 || y >= class_count || p < 0 || p >= class_count) {
      throw ShapeError("metrics: class index out of range at position " + std::to_string(i));
    }
    ++label_count[static_cast<std::size_t>(y)];
    ++pred_count[static_cast<std::size_t>(p)];
    if (y == p) {
      ++tp[static_cast<std::size_t>(y)];
      ++correct;
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  double recall_sum = 0.0;
  int recall_classes = 0;
  double f1_sum = 0.0;
  int f1_classes = 0;
  m.per_class_recall.assign(c, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < c; ++k) {
    if (label_count[k] > 0) {
      m.per_class_recall[k] = static_cast<double>(tp[k]) / static_cast<double>(label_count[k]);
      recall_sum += m.per_class_recall[k];
      ++recall_classes;
    }
    if (label_count[k] > 0 || pred_count[k] > 0) {
      f1_sum += 2.0 * static_cast<double>(tp[k]) /
                static_cast<double>(label_count[k] + pred_count[k]);
      ++f1_classes;
    }
  }
  m.balanced_accuracy = recall_sum / recall_classes;
  m.macro_f1 = f1_sum / f1_classes;
  return m;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < logits.cols(); ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double feature_inconsistency(const Matrix& synthesized, const Matrix& original, int bins) {
  if (bins < 2) throw ConfigError("feature_inconsistency: bins must be >= 2, got " + std::to_string(bins));
  if (synthesized.rows() == 0 || original.rows() == 0) {
    throw DataError("feature_inconsistency: both samples need at least one row");
  }
  if (synthesized.cols() != original.cols()) {
    throw ShapeError("feature_inconsistency: " + std::to_string(synthesized.cols()) + " vs " +
                     std::to_string(original.cols()) + " feature columns");
  }
  const auto dims = synthesized.cols();
  if (dims == 0) return 0.0;
  std::vector<double> p(static_cast<std::size_t>(bins));
  std::vector<double> q(static_cast<std::size_t>(bins));
  double total = 0.0;
  for (Eigen::Index j = 0; j < dims; ++j) {
    const double lo = std::min(synthesized.col(j).minCoeff(), original.col(j).minCoeff());
    const double hi = std::max(synthesized.col(j).maxCoeff(), original.col(j).maxCoeff());
    if (!(hi > lo)) continue;
    auto fill = [&](const Matrix& x, std::vector<double>& h) {
      std::fill(h.begin(), h.end(), 0.0);
      const double share = 1.0 / static_cast<double>(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        auto b = static_cast<int>((x(i, j) - lo) / (hi - lo) * bins);
        h[static_cast<std::size_t>(std::clamp(b, 0, bins - 1))] += share;
      }
    };
    fill(synthesized, p);
    fill(original, q);
    double tv = 0.0;
    for (int b = 0; b < bins; ++b) tv += std::abs(p[static_cast<std::size_t>(b)] - q[static_cast<std::size_t>(b)]);
    total += std::min(1.0, 0.5 * tv);
  }
  return total / static_cast<double>(dims);
}

}  // namespace graphife
