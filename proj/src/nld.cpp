#include "graphife/nld.hpp"

#include <algorithm>
#include <cmath>

namespace graphife {

double nld_weight(double mean, double min, double max) {
  const double denom = max - mean;
  if (std::abs(denom) <= 1e-12) return 1.0;
  return std::clamp((mean - min) / denom, 0.0, 1.0);
}

NldStats neighbor_label_stats(const Graph& g, const ImbalancedSplit& split) {
  const std::int64_t n = g.num_nodes();
  const int c_count = g.class_count();
  NldStats s;
  s.counts = Matrix::Zero(n, c_count);
  s.same_label.assign(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t v = 0; v < n; ++v) {
    for (auto u : g.neighbors(v)) s.counts(v, g.label(u)) += 1.0;
    const auto deg = g.degree(v);
    if (deg > 0) {
      s.same_label[static_cast<std::size_t>(v)] = s.counts(v, g.label(v)) / static_cast<double>(deg);
    }
  }

  const auto cc = static_cast<std::size_t>(c_count);
  s.mean.assign(cc, 0.0);
  s.min.assign(cc, 0.0);
  s.max.assign(cc, 0.0);
  s.weight.assign(cc, 1.0);
  std::vector<std::vector<double>> per_class(cc);
  for (auto v : split.train) {
    per_class[static_cast<std::size_t>(g.label(v))].push_back(s.same_label[static_cast<std::size_t>(v)]);
  }
  for (std::size_t c = 0; c < cc; ++c) {
    const auto& o = per_class[c];
    if (o.empty()) continue;
    double total = 0.0;
    for (double x : o) total += x;
    s.mean[c] = total / static_cast<double>(o.size());
    s.min[c] = *std::min_element(o.begin(), o.end());
    s.max[c] = *std::max_element(o.begin(), o.end());
    s.weight[c] = o.size() < 2 ? 1.0 : nld_weight(s.mean[c], s.min[c], s.max[c]);
  }
  return s;
}

}  // namespace graphife
