#pragma once

#include "graphife/autodiff.hpp"
#include "graphife/sparse.hpp"

#include <cstdint>
#include <memory>
#include <span>

namespace graphife::ad {

// Every primitive records its result on the tape of its first tensor argument, checks shapes
// (ShapeError) and rejects non-finite results (NumericError).

Tensor matmul(Tensor a, Tensor b);
/// a + b. `b` may have a's shape or be a 1 x cols row broadcast over a's rows.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor elementwise_mul(Tensor a, Tensor b);
Tensor scalar_mul(Tensor a, double s);
Tensor relu(Tensor a);
Tensor sigmoid(Tensor a);
Tensor concat_cols(Tensor a, Tensor b);
/// Rows of `a` at `indices` (repeats allowed; backward scatter-adds).
Tensor row_gather(Tensor a, std::span<const std::int64_t> indices);
/// n x 1 mean of each row.
Tensor row_mean(Tensor a);
/// 1 x d mean of each column.
Tensor col_mean(Tensor a);
/// 1x1 mean of |a| over all entries.
Tensor abs_mean(Tensor a);
Tensor sum(Tensor a);
Tensor mean(Tensor a);
/// Row-wise log-softmax.
Tensor log_softmax(Tensor logits);
/// 1x1 max(a, floor); gradient passes only where a > floor.
Tensor clamp_min(Tensor a, double floor);

/// a * x for a constant sparse a. Backward propagates a^T * grad to x.
Tensor spmm(std::shared_ptr<const SparseMatrix> a, Tensor x);

/// (1/n) * sum_i w_i * (-log softmax(logits_i)[label_i]).
Tensor weighted_cross_entropy(Tensor logits, std::span<const int> labels,
                              std::span<const double> weights);
/// weighted_cross_entropy with unit weights.
Tensor cross_entropy(Tensor logits, std::span<const int> labels);

/// Quantile count used when the two samples differ in size.
inline constexpr int kWassersteinQuantiles = 64;

/// Column-wise 1-D Wasserstein-1 distance averaged over columns.
///
/// Column j of `a` (m samples) is compared with column j of `b` (k samples). With m == k the
/// distance is (1/m) sum_i |a_(i) - b_(i)| over sorted order; otherwise both columns are first
/// resampled at kWassersteinQuantiles equally spaced quantile levels. Gradients flow through the
/// sorted values with the forward permutation held fixed (ties broken by original index).
Tensor sliced_wasserstein(Tensor a, Tensor b);

/// 1-D case: `a` is m x 1, `b` is k x 1.
Tensor sorted_1d_wasserstein(Tensor a, Tensor b);

/// Quantile grid used for unequal sample sizes: entry i is the sorted sample at
/// rank min(n - 1, floor((i + 0.5) / q * n)).
std::vector<std::int64_t> quantile_ranks(std::int64_t n, int q);

}  // namespace graphife::ad
