#pragma once

// Kraskov-Stoegbauer-Grassberger mutual information estimator (algorithm 1)
// for scalar pairs, with max-norm neighborhoods.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

namespace skillworld::analysis {

namespace detail {

/// Number of entries of sorted v strictly within eps of c, excluding one
/// occurrence of c itself.
inline std::size_t count_within(const std::vector<double>& sorted, double c, double eps) {
  const auto lo = std::upper_bound(sorted.begin(), sorted.end(), c - eps);
  const auto hi = std::lower_bound(sorted.begin(), sorted.end(), c + eps);
  const auto n = hi > lo ? static_cast<std::size_t>(hi - lo) : 0u;
  return n > 0 ? n - 1 : 0;
}

}  // namespace detail

/// psi(k) + psi(n) - <psi(n_x + 1) + psi(n_y + 1)>, in nats.
inline double knn_mi(std::span<const double> x, std::span<const double> y, std::size_t k = 3) {
  const std::size_t n = x.size();
  if (y.size() != n) throw std::invalid_argument("knn_mi: sample counts differ");
  if (k < 1) throw std::invalid_argument("knn_mi: k must be >= 1");
  if (n <= k) throw std::invalid_argument("knn_mi: need more than k samples");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw std::invalid_argument("knn_mi: non-finite sample");

  // Points ordered by x (ties by index) so neighbor search scans outward.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b] || (x[a] == x[b] && a < b); });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;
  std::vector<double> xs(n), ys(y.begin(), y.end());
  for (std::size_t r = 0; r < n; ++r) xs[r] = x[order[r]];
  std::sort(ys.begin(), ys.end());

  double acc = 0.0;
  std::priority_queue<double> best;  // k smallest joint distances (max on top)
  for (std::size_t i = 0; i < n; ++i) {
    best = {};
    const std::size_t r = rank[i];
    auto visit = [&](std::size_t rr) {
      const std::size_t j = order[rr];
      const double d = std::max(std::fabs(x[j] - x[i]), std::fabs(y[j] - y[i]));
      if (best.size() < k) {
        best.push(d);
      } else if (d < best.top()) {
        best.pop();
        best.push(d);
      }
    };
    std::size_t lo = r, hi = r;  // scanned range is (lo, hi) exclusive of r
    bool left = r > 0, right = r + 1 < n;
    while (left || right) {
      const double bound = best.size() < k ? INFINITY : best.top();
      if (left) {
        if (std::fabs(xs[lo - 1] - x[i]) > bound) {
          left = false;
        } else {
          visit(--lo);
          left = lo > 0;
        }
      }
      const double bound2 = best.size() < k ? INFINITY : best.top();
      if (right) {
        if (std::fabs(xs[hi + 1] - x[i]) > bound2) {
          right = false;
        } else {
          visit(++hi);
          right = hi + 1 < n;
        }
      }
    }
    const double eps = best.top();
    const std::size_t nx = detail::count_within(xs, x[i], eps);
    const std::size_t ny = detail::count_within(ys, y[i], eps);
    acc += boost::math::digamma(static_cast<double>(nx + 1)) + boost::math::digamma(static_cast<double>(ny + 1));
  }
  return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) -
         acc / static_cast<double>(n);
}

struct MIMatrix {
  std::vector<std::string> row_labels;  // ground features
  std::vector<std::string> col_labels;  // abstract features
  std::vector<std::vector<double>> values;
};

/// Columns of ground and abstract samples (each inner vector is one feature).
inline MIMatrix mi_matrix(const std::vector<std::vector<double>>& ground, const std::vector<std::string>& ground_labels,
                          const std::vector<std::vector<double>>& abstract, std::size_t k = 3) {
  if (ground.size() != ground_labels.size()) throw std::invalid_argument("mi_matrix: label count mismatch");
  MIMatrix m;
  m.row_labels = ground_labels;
  for (std::size_t j = 0; j < abstract.size(); ++j) m.col_labels.push_back("z" + std::to_string(j + 1));
  for (const auto& g : ground) {
    std::vector<double> row;
    for (const auto& a : abstract) row.push_back(std::max(0.0, knn_mi(g, a, k)));
    m.values.push_back(std::move(row));
  }
  return m;
}

}  // namespace skillworld::analysis
