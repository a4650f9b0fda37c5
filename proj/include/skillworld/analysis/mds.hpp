#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace skillworld::analysis {

struct Embedding {
  Eigen::MatrixXd coords;  // n x target_dim
  std::vector<double> eigenvalues;
  bool rank_deficient = false;  // fewer positive eigenvalues than target_dim
};

/// Classical (Torgerson) MDS of the rows of points. Each axis is oriented so
/// its first non-negligible coordinate is positive.
inline Embedding classical_mds(const Eigen::MatrixXd& points, int target_dim = 2) {
  const Eigen::Index n = points.rows();
  if (n < 3) throw std::invalid_argument("classical_mds: need at least 3 points");
  if (target_dim < 1) throw std::invalid_argument("classical_mds: target_dim must be >= 1");
  Eigen::MatrixXd D2(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) D2(i, j) = (points.row(i) - points.row(j)).squaredNorm();
  const Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  const Eigen::MatrixXd Bm = -0.5 * J * D2 * J;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Bm);
  if (es.info() != Eigen::Success) throw std::runtime_error("classical_mds: eigensolver failed");
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const double tol = 1e-10 * scale;
  Embedding e;
  e.coords = Eigen::MatrixXd::Zero(n, target_dim);
  for (int c = 0; c < target_dim; ++c) {
    const Eigen::Index idx = n - 1 - c;  // eigenvalues ascend
    const double lambda = idx >= 0 ? es.eigenvalues()(idx) : 0.0;
    e.eigenvalues.push_back(lambda);
    if (!(lambda > tol)) {
      e.rank_deficient = true;
      continue;
    }
    Eigen::VectorXd v = es.eigenvectors().col(idx);
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::fabs(v(i)) > 1e-9) {
        if (v(i) < 0) v = -v;
        break;
      }
    e.coords.col(c) = v * std::sqrt(lambda);
  }
  return e;
}

}  // namespace skillworld::analysis
