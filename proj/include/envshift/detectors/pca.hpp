#pragma once

#include <algorithm>
#include <vector>

#include "envshift/detectors/neighbors.hpp"

namespace envshift::detectors {

/// Whitened PCA with every component retained. The score is the squared norm
/// of the whitened coordinates, i.e. each squared projection divided by the
/// component variance. Components with variance below 1e-12 of the largest
/// are numerically null and skipped.
struct PcaDetector {
  Vector mean;
  Matrix components;           // d x k, columns sorted by variance, descending
  Vector explained_variance;   // k, sample variance (n - 1 divisor)

  void fit(const Matrix& x) {
    require_rows(x, 2, "PCA");
    mean = x.colwise().mean().transpose();
    const Matrix centered = x.rowwise() - mean.transpose();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericalError("PCA eigen decomposition failed", -1);
    const Eigen::Index d = x.cols();
    const Eigen::Index k = std::min<Eigen::Index>(d, x.rows());
    const double top = std::max(eig.eigenvalues()(d - 1), 0.0);
    components.resize(d, k);
    explained_variance.resize(k);
    Eigen::Index kept = 0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index src = d - 1 - j;
      const double var = eig.eigenvalues()(src);
      if (!(var > 1e-12 * top)) continue;
      components.col(kept) = eig.eigenvectors().col(src);
      explained_variance(kept) = var;
      ++kept;
    }
    components.conservativeResize(d, kept);
    explained_variance.conservativeResize(kept);
  }

  Vector score(const Matrix& x) const {
    require_cols(mean.size(), x, "PCA");
    const Matrix proj = (x.rowwise() - mean.transpose()) * components;
    return (proj.array().square().rowwise() / explained_variance.transpose().array()).rowwise().sum();
  }
};

}  // namespace envshift::detectors
