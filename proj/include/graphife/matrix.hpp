#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

namespace graphife {

/// Dense row-major matrix of 64-bit floats. Row-major keeps node rows contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(const Matrix& m, const std::string& what);

inline bool same_shape(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

}  // namespace graphife
