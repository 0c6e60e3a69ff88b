#include "graphife/ops.hpp"

#include "graphife/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace graphife::ad {
namespace {

void require_same_tape(Tensor a, Tensor b, const char* op) {
  if (&a.tape() != &b.tape()) throw TapeError(std::string(op) + ": operands on different tapes");
}

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.rows(), a.cols()) +
                   " and " + shape_string(b.rows(), b.cols()));
}

Matrix scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

// Row-wise max-shifted log-sum-exp.
Vector row_logsumexp(const Matrix& x) {
  Vector out(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    out(r) = mx + std::log((x.row(r).array() - mx).exp().sum());
  }
  return out;
}

using ColMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;

// Unsigned key with the same order as the double; -0 and +0 share a key.
std::uint64_t order_key(double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x + 0.0);
  return (bits >> 63) != 0 ? ~bits : bits | (std::uint64_t{1} << 63);
}

// Row indices of `m` sorted ascending by their value in `column`, ties by index.
// Stable LSD radix sort over the keys, one byte per pass.
std::vector<std::int64_t> sorted_order(const ColMatrix& m, Eigen::Index column) {
  const auto n = static_cast<std::size_t>(m.rows());
  const double* v = m.col(column).data();
  std::vector<std::pair<std::uint64_t, std::int64_t>> cur(n);
  std::vector<std::pair<std::uint64_t, std::int64_t>> next(n);
  for (std::size_t i = 0; i < n; ++i) cur[i] = {order_key(v[i]), static_cast<std::int64_t>(i)};
  std::array<std::array<std::size_t, 256>, 8> count{};
  for (const auto& e : cur) {
    for (int p = 0; p < 8; ++p) ++count[p][(e.first >> (8 * p)) & 0xff];
  }
  for (int p = 0; p < 8; ++p) {
    const int shift = 8 * p;
    if (n == 0 || count[p][(cur[0].first >> shift) & 0xff] == n) continue;
    std::array<std::size_t, 256> start{};
    for (int b = 1; b < 256; ++b) start[b] = start[b - 1] + count[p][b - 1];
    for (const auto& e : cur) next[start[(e.first >> shift) & 0xff]++] = e;
    cur.swap(next);
  }
  std::vector<std::int64_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = cur[i].second;
  return order;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor matmul(Tensor a, Tensor b) {
  require_same_tape(a, b, "matmul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
  Matrix out;
  out.noalias() = av * bv;
  return a.tape().record(OpKind::kMatMul, {a, b}, std::move(out),
                         [a, b](const Matrix& g, GradSink& sink) {
                           if (sink.wants(0)) sink.at(0).noalias() += g * b.value().transpose();
                           if (sink.wants(1)) sink.at(1).noalias() += a.value().transpose() * g;
                         });
}

Tensor add(Tensor a, Tensor b) {
  require_same_tape(a, b, "add");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (same_shape(av, bv)) {
    return a.tape().record(OpKind::kAdd, {a, b}, av + bv, [](const Matrix& g, GradSink& sink) {
      if (sink.wants(0)) sink.accumulate(0, g);
      if (sink.wants(1)) sink.accumulate(1, g);
    });
  }
  if (bv.rows() == 1 && bv.cols() == av.cols()) {
    Matrix out = av.rowwise() + bv.row(0);
    return a.tape().record(OpKind::kAdd, {a, b}, std::move(out),
                           [](const Matrix& g, GradSink& sink) {
                             if (sink.wants(0)) sink.accumulate(0, g);
                             if (sink.wants(1)) sink.accumulate(1, g.colwise().sum());
                           });
  }
  shape_mismatch("add", av, bv);
}

Tensor sub(Tensor a, Tensor b) { return add(a, scalar_mul(b, -1.0)); }

Tensor elementwise_mul(Tensor a, Tensor b) {
  require_same_tape(a, b, "elementwise_mul");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!same_shape(av, bv)) shape_mismatch("elementwise_mul", av, bv);
  return a.tape().record(OpKind::kElementwiseMul, {a, b}, av.cwiseProduct(bv),
                         [a, b](const Matrix& g, GradSink& sink) {
                           if (sink.wants(0)) sink.accumulate(0, g.cwiseProduct(b.value()));
                           if (sink.wants(1)) sink.accumulate(1, g.cwiseProduct(a.value()));
                         });
}

Tensor scalar_mul(Tensor a, double s) {
  return a.tape().record(OpKind::kScalarMul, {a}, s * a.value(),
                         [s](const Matrix& g, GradSink& sink) { sink.accumulate(0, s * g); });
}

Tensor relu(Tensor a) {
  return a.tape().record(OpKind::kRelu, {a}, a.value().cwiseMax(0.0),
                         [a](const Matrix& g, GradSink& sink) {
                           sink.accumulate(0, (a.value().array() > 0.0).select(g.array(), 0.0).matrix());
                         });
}

Tensor sigmoid(Tensor a) {
  auto logistic = [](const Matrix& x) -> Matrix {
    return (1.0 + (-x.array()).exp()).inverse().matrix();
  };
  return a.tape().record(OpKind::kSigmoid, {a}, logistic(a.value()),
                         [a, logistic](const Matrix& g, GradSink& sink) {
                           const Matrix y = logistic(a.value());
                           sink.accumulate(0, (g.array() * y.array() * (1.0 - y.array())).matrix());
                         });
}

Tensor concat_cols(Tensor a, Tensor b) {
  require_same_tape(a, b, "concat_cols");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) shape_mismatch("concat_cols", av, bv);
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const Eigen::Index ca = av.cols();
  const Eigen::Index cb = bv.cols();
  return a.tape().record(OpKind::kConcatCols, {a, b}, std::move(out),
                         [ca, cb](const Matrix& g, GradSink& sink) {
                           if (sink.wants(0)) sink.accumulate(0, g.leftCols(ca));
                           if (sink.wants(1)) sink.accumulate(1, g.rightCols(cb));
                         });
}

Tensor row_gather(Tensor a, std::span<const std::int64_t> indices) {
  const Matrix& av = a.value();
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  Matrix out(static_cast<Eigen::Index>(idx.size()), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= av.rows()) {
      throw ShapeError("row_gather: index " + std::to_string(idx[i]) + " outside " +
                       std::to_string(av.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = av.row(idx[i]);
  }
  return a.tape().record(OpKind::kRowGather, {a}, std::move(out),
                         [idx = std::move(idx)](const Matrix& g, GradSink& sink) {
                           Matrix& dst = sink.at(0);
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             dst.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                           }
                         });
}

Tensor row_mean(Tensor a) {
  const Matrix& av = a.value();
  if (av.cols() == 0) throw ShapeError("row_mean: zero-width rows");
  Matrix out = av.rowwise().mean();
  const double inv = 1.0 / static_cast<double>(av.cols());
  return a.tape().record(OpKind::kRowMean, {a}, std::move(out),
                         [inv](const Matrix& g, GradSink& sink) {
                           Matrix& dst = sink.at(0);
                           dst.colwise() += (inv * g.col(0));
                         });
}

Tensor col_mean(Tensor a) {
  const Matrix& av = a.value();
  if (av.rows() == 0) throw ShapeError("col_mean: zero rows");
  Matrix out = av.colwise().mean();
  const double inv = 1.0 / static_cast<double>(av.rows());
  return a.tape().record(OpKind::kColMean, {a}, std::move(out),
                         [inv](const Matrix& g, GradSink& sink) {
                           Matrix& dst = sink.at(0);
                           dst.rowwise() += (inv * g.row(0));
                         });
}

Tensor abs_mean(Tensor a) {
  const Matrix& av = a.value();
  if (av.size() == 0) throw ShapeError("abs_mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(av.size());
  return a.tape().record(OpKind::kAbsMean, {a}, scalar(av.cwiseAbs().sum() * inv),
                         [a, inv](const Matrix& g, GradSink& sink) {
                           const double s = g(0, 0) * inv;
                           sink.at(0).array() += s * a.value().array().sign();
                         });
}

Tensor sum(Tensor a) {
  return a.tape().record(OpKind::kSum, {a}, scalar(a.value().sum()),
                         [](const Matrix& g, GradSink& sink) { sink.at(0).array() += g(0, 0); });
}

Tensor mean(Tensor a) {
  const Matrix& av = a.value();
  if (av.size() == 0) throw ShapeError("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(av.size());
  return a.tape().record(OpKind::kMean, {a}, scalar(av.sum() * inv),
                         [inv](const Matrix& g, GradSink& sink) {
                           sink.at(0).array() += g(0, 0) * inv;
                         });
}

Tensor log_softmax(Tensor logits) {
  const Matrix& x = logits.value();
  if (x.cols() == 0) throw ShapeError("log_softmax: zero-width row");
  const Vector lse = row_logsumexp(x);
  Matrix out = x.colwise() - lse;
  return logits.tape().record(OpKind::kLogSoftmax, {logits}, std::move(out),
                              [logits](const Matrix& g, GradSink& sink) {
                                const Matrix& xv = logits.value();
                                const Vector l = row_logsumexp(xv);
                                const Matrix p = (xv.colwise() - l).array().exp().matrix();
                                const Vector gs = g.rowwise().sum();
                                sink.accumulate(0, g - (p.array().colwise() * gs.array()).matrix());
                              });
}

Tensor clamp_min(Tensor a, double floor) {
  const double v = a.item();
  const bool pass = v > floor;
  return a.tape().record(OpKind::kClampMin, {a}, scalar(pass ? v : floor),
                         [pass](const Matrix& g, GradSink& sink) {
                           if (pass) sink.accumulate(0, g);
                         });
}

Tensor spmm(std::shared_ptr<const SparseMatrix> a, Tensor x) {
  if (!a) throw ShapeError("spmm: null sparse matrix");
  Matrix out = a->multiply(x.value());
  return x.tape().record(OpKind::kSpmm, {x}, std::move(out),
                         [a = std::move(a)](const Matrix& g, GradSink& sink) {
                           sink.accumulate(0, a->transpose_multiply(g));
                         });
}

Tensor weighted_cross_entropy(Tensor logits, std::span<const int> labels,
                              std::span<const double> weights) {
  const Matrix& x = logits.value();
  const Eigen::Index n = x.rows();
  const Eigen::Index c = x.cols();
  if (c == 0) throw ShapeError("weighted_cross_entropy: zero-width logits");
  if (n == 0) throw ShapeError("weighted_cross_entropy: no rows");
  if (static_cast<Eigen::Index>(labels.size()) != n) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  if (static_cast<Eigen::Index>(weights.size()) != n) {
    throw ShapeError("weighted_cross_entropy: " + std::to_string(weights.size()) +
                     " weights for " + std::to_string(n) + " rows");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= c) {
      throw ShapeError("weighted_cross_entropy: label " + std::to_string(labels[i]) +
                       " out of range for " + std::to_string(c) + " classes");
    }
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw NumericError("weighted_cross_entropy: weight " + std::to_string(i) +
                         " is negative or non-finite");
    }
  }
  const Vector lse = row_logsumexp(x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) total += weights[i] * (lse(i) - x(i, labels[i]));
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<int> y(labels.begin(), labels.end());
  std::vector<double> w(weights.begin(), weights.end());
  return logits.tape().record(
      OpKind::kWeightedCrossEntropy, {logits}, scalar(total * inv_n),
      [logits, y = std::move(y), w = std::move(w), inv_n](const Matrix& g, GradSink& sink) {
        const Matrix& xv = logits.value();
        const Vector l = row_logsumexp(xv);
        Matrix& dst = sink.at(0);
        for (Eigen::Index i = 0; i < xv.rows(); ++i) {
          const double s = g(0, 0) * w[i] * inv_n;
          dst.row(i).array() += s * (xv.row(i).array() - l(i)).exp();
          dst(i, y[i]) -= s;
        }
      });
}

Tensor cross_entropy(Tensor logits, std::span<const int> labels) {
  const std::vector<double> ones(labels.size(), 1.0);
  return weighted_cross_entropy(logits, labels, ones);
}

std::vector<std::int64_t> quantile_ranks(std::int64_t n, int q) {
  if (n < 1 || q < 1) throw ShapeError("quantile_ranks: empty sample or grid");
  std::vector<std::int64_t> ranks(q);
  for (int i = 0; i < q; ++i) {
    // floor((i + 1/2) / q * n) in exact integer arithmetic
    ranks[i] = std::min<std::int64_t>(n - 1, ((2 * static_cast<std::int64_t>(i) + 1) * n) / (2 * q));
  }
  return ranks;
}

Tensor sliced_wasserstein(Tensor a, Tensor b) {
  require_same_tape(a, b, "sliced_wasserstein");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() == 0 || bv.rows() == 0) throw ShapeError("sliced_wasserstein: empty input");
  if (av.cols() != bv.cols() || av.cols() == 0) shape_mismatch("sliced_wasserstein", av, bv);
  const Eigen::Index m = av.rows();
  const Eigen::Index k = bv.rows();
  const Eigen::Index d = av.cols();

  // Matched sample positions per column: pairs (row in a, row in b), each with mass 1/len.
  std::vector<std::int64_t> ra;
  std::vector<std::int64_t> rb;
  std::int64_t len = 0;
  if (m == k) {
    len = m;
    ra.resize(m);
    rb.resize(m);
    std::iota(ra.begin(), ra.end(), 0);
    std::iota(rb.begin(), rb.end(), 0);
  } else {
    len = kWassersteinQuantiles;
    ra = quantile_ranks(m, kWassersteinQuantiles);
    rb = quantile_ranks(k, kWassersteinQuantiles);
  }

  // For every column: (row index in a, row index in b, sign of the difference).
  std::vector<std::int64_t> rows_a(static_cast<std::size_t>(len * d));
  std::vector<std::int64_t> rows_b(static_cast<std::size_t>(len * d));
  std::vector<double> signs(static_cast<std::size_t>(len * d));
  const ColMatrix at = av;
  const ColMatrix bt = bv;
  double total = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto oa = sorted_order(at, j);
    const auto ob = sorted_order(bt, j);
    double col = 0.0;
    for (std::int64_t i = 0; i < len; ++i) {
      const std::int64_t ia = oa[ra[i]];
      const std::int64_t ib = ob[rb[i]];
      const double diff = at(ia, j) - bt(ib, j);
      col += std::abs(diff);
      const auto slot = static_cast<std::size_t>(j * len + i);
      rows_a[slot] = ia;
      rows_b[slot] = ib;
      signs[slot] = sign(diff);
    }
    total += col / static_cast<double>(len);
  }
  const double scale = 1.0 / (static_cast<double>(len) * static_cast<double>(d));
  return a.tape().record(
      OpKind::kSlicedWasserstein, {a, b}, scalar(total / static_cast<double>(d)),
      [rows_a = std::move(rows_a), rows_b = std::move(rows_b), signs = std::move(signs), len, d,
       scale](const Matrix& g, GradSink& sink) {
        const double s = g(0, 0) * scale;
        Matrix* da = sink.wants(0) ? &sink.at(0) : nullptr;
        Matrix* db = sink.wants(1) ? &sink.at(1) : nullptr;
        for (Eigen::Index j = 0; j < d; ++j) {
          for (std::int64_t i = 0; i < len; ++i) {
            const auto slot = static_cast<std::size_t>(j * len + i);
            if (da != nullptr) (*da)(rows_a[slot], j) += s * signs[slot];
            if (db != nullptr) (*db)(rows_b[slot], j) -= s * signs[slot];
          }
        }
      });
}

Tensor sorted_1d_wasserstein(Tensor a, Tensor b) {
  if (a.cols() != 1 || b.cols() != 1) {
    throw ShapeError("sorted_1d_wasserstein: expects column vectors, got " +
                     shape_string(a.rows(), a.cols()) + " and " + shape_string(b.rows(), b.cols()));
  }
  return sliced_wasserstein(a, b);
}

}  // namespace graphife::ad
