#pragma once

#include "graphife/matrix.hpp"

#include <cstdint>
#include <tuple>
#include <vector>

namespace graphife {

/// Compressed sparse row matrix.
///
/// Invariants (checked on construction): row offsets are nondecreasing, start at 0 and end at
/// the nonzero count; column indices are strictly increasing within each row and lie in
/// [0, cols).
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::int64_t rows, std::int64_t cols, std::vector<std::int64_t> row_offsets,
               std::vector<std::int64_t> col_indices, std::vector<double> values);

  /// Builds from (row, col, value) triplets. Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::int64_t rows, std::int64_t cols,
                                    std::vector<std::tuple<std::int64_t, std::int64_t, double>> triplets);
  static SparseMatrix identity(std::int64_t n);
  /// Keeps the exact nonzero pattern of `dense` (entries equal to 0.0 are dropped).
  static SparseMatrix from_dense(const Matrix& dense);

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t nonzeros() const { return static_cast<std::int64_t>(values_.size()); }

  const std::vector<std::int64_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::int64_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  Matrix to_dense() const;
  SparseMatrix transposed() const;

  /// this * x, accumulated row by row in a fixed order.
  Matrix multiply(const Matrix& x) const;
  /// this^T * g, scattered in row order (deterministic).
  Matrix transpose_multiply(const Matrix& g) const;

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<std::int64_t> row_offsets_{0};
  std::vector<std::int64_t> col_indices_;
  std::vector<double> values_;
};

}  // namespace graphife
