#pragma once

#include "graphife/matrix.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace graphife {

struct ClassificationMetrics {
  double accuracy = 0.0;
  /// Unweighted mean of per-class recall over classes present in the labels.
  double balanced_accuracy = 0.0;
  /// Unweighted mean of per-class F1 over classes present in labels or predictions.
  double macro_f1 = 0.0;
  /// Recall per class; NaN for classes absent from the labels.
  std::vector<double> per_class_recall;
};

/// Throws DataError on empty input.
ClassificationMetrics classification_metrics(std::span<const int> predictions,
                                             std::span<const int> labels, int class_count);

/// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const Matrix& logits);

/// Mean over feature dimensions of the total variation between the two samples' histograms,
/// both binned over their combined min-max range. A dimension constant across both samples
/// contributes 0. Throws DataError on empty samples, ConfigError when bins < 2.
double feature_inconsistency(const Matrix& synthesized, const Matrix& original, int bins = 32);

}  // namespace graphife
