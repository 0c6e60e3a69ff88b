#include "graphife/matrix.hpp"

#include "graphife/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>

namespace graphife {

void require_finite(const Matrix& m, const std::string& what) {
  const double* data = m.data();
  const Eigen::Index n = m.size();
  constexpr std::uint64_t kExponent = 0x7ff0000000000000ULL;
  std::uint64_t bad = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(data[i]) & kExponent) == kExponent);
  }
  if (bad == 0) return;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError(what + ": non-finite value at (" + std::to_string(i / m.cols()) + ", " +
                         std::to_string(i % m.cols()) + ")");
    }
  }
}

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace graphife
