#include "graphife/sparse.hpp"

#include "graphife/error.hpp"

#include <algorithm>

namespace graphife {

SparseMatrix::SparseMatrix(std::int64_t rows, std::int64_t cols,
                           std::vector<std::int64_t> row_offsets,
                           std::vector<std::int64_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (rows_ < 0 || cols_ < 0) throw ShapeError("SparseMatrix: negative dimension");
  if (static_cast<std::int64_t>(row_offsets_.size()) != rows_ + 1) {
    throw ShapeError("SparseMatrix: row offsets must have rows + 1 entries");
  }
  if (col_indices_.size() != values_.size()) {
    throw ShapeError("SparseMatrix: column index and value arrays differ in length");
  }
  if (row_offsets_.front() != 0 ||
      row_offsets_.back() != static_cast<std::int64_t>(values_.size())) {
    throw ShapeError("SparseMatrix: row offsets must start at 0 and end at the nonzero count");
  }
  for (std::int64_t r = 0; r < rows_; ++r) {
    const auto begin = row_offsets_[r];
    const auto end = row_offsets_[r + 1];
    if (end < begin) throw ShapeError("SparseMatrix: row offsets must be nondecreasing");
    for (auto k = begin; k < end; ++k) {
      const auto c = col_indices_[k];
      if (c < 0 || c >= cols_) throw ShapeError("SparseMatrix: column index out of range");
      if (k > begin && col_indices_[k - 1] >= c) {
        throw ShapeError("SparseMatrix: column indices must be strictly increasing per row");
      }
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(
    std::int64_t rows, std::int64_t cols,
    std::vector<std::tuple<std::int64_t, std::int64_t, double>> triplets) {
  for (const auto& [r, c, v] : triplets) {
    if (r < 0 || r >= rows || c < 0 || c >= cols) {
      throw ShapeError("SparseMatrix::from_triplets: coordinate out of range");
    }
  }
  std::stable_sort(triplets.begin(), triplets.end(), [](const auto& x, const auto& y) {
    return std::get<0>(x) != std::get<0>(y) ? std::get<0>(x) < std::get<0>(y)
                                            : std::get<1>(x) < std::get<1>(y);
  });
  std::vector<std::int64_t> offsets(rows + 1, 0);
  std::vector<std::int64_t> cols_out;
  std::vector<double> vals;
  cols_out.reserve(triplets.size());
  vals.reserve(triplets.size());
  std::int64_t last_r = -1;
  std::int64_t last_c = -1;
  for (const auto& [r, c, v] : triplets) {
    if (r == last_r && c == last_c) {
      vals.back() += v;
      continue;
    }
    cols_out.push_back(c);
    vals.push_back(v);
    ++offsets[r + 1];
    last_r = r;
    last_c = c;
  }
  for (std::int64_t r = 0; r < rows; ++r) offsets[r + 1] += offsets[r];
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals));
}

SparseMatrix SparseMatrix::identity(std::int64_t n) {
  std::vector<std::int64_t> offsets(n + 1);
  std::vector<std::int64_t> cols(n);
  for (std::int64_t i = 0; i <= n; ++i) offsets[i] = i;
  for (std::int64_t i = 0; i < n; ++i) cols[i] = i;
  return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0));
}

SparseMatrix SparseMatrix::from_dense(const Matrix& dense) {
  std::vector<std::int64_t> offsets(dense.rows() + 1, 0);
  std::vector<std::int64_t> cols;
  std::vector<double> vals;
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      if (dense(r, c) != 0.0) {
        cols.push_back(c);
        vals.push_back(dense(r, c));
      }
    }
    offsets[r + 1] = static_cast<std::int64_t>(vals.size());
  }
  return SparseMatrix(dense.rows(), dense.cols(), std::move(offsets), std::move(cols),
                      std::move(vals));
}

Matrix SparseMatrix::to_dense() const {
  Matrix out = Matrix::Zero(rows_, cols_);
  for (std::int64_t r = 0; r < rows_; ++r) {
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) out(r, col_indices_[k]) = values_[k];
  }
  return out;
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<std::tuple<std::int64_t, std::int64_t, double>> t;
  t.reserve(values_.size());
  for (std::int64_t r = 0; r < rows_; ++r) {
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      t.emplace_back(col_indices_[k], r, values_[k]);
    }
  }
  return from_triplets(cols_, rows_, std::move(t));
}

Matrix SparseMatrix::multiply(const Matrix& x) const {
  if (x.rows() != cols_) {
    throw ShapeError("spmm: sparse " + shape_string(rows_, cols_) + " times dense " +
                     shape_string(x.rows(), x.cols()));
  }
  const Eigen::Index w = x.cols();
  Matrix out = Matrix::Zero(rows_, w);
  for (std::int64_t r = 0; r < rows_; ++r) {
    double* dst = out.data() + r * w;
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const double v = values_[k];
      const double* src = x.data() + col_indices_[k] * w;
      for (Eigen::Index j = 0; j < w; ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

Matrix SparseMatrix::transpose_multiply(const Matrix& g) const {
  if (g.rows() != rows_) {
    throw ShapeError("spmm backward: sparse^T " + shape_string(cols_, rows_) + " times " +
                     shape_string(g.rows(), g.cols()));
  }
  const Eigen::Index w = g.cols();
  Matrix out = Matrix::Zero(cols_, w);
  for (std::int64_t r = 0; r < rows_; ++r) {
    const double* src = g.data() + r * w;
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const double v = values_[k];
      double* dst = out.data() + col_indices_[k] * w;
      for (Eigen::Index j = 0; j < w; ++j) dst[j] += v * src[j];
    }
  }
  return out;
}

}  // namespace graphife
