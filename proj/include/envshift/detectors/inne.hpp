#pragma once

#include <limits>
#include <vector>

#include "envshift/detectors/neighbors.hpp"
#include "envshift/rng.hpp"

namespace envshift::detectors {

/// Isolation using nearest-neighbour ensembles. Each estimator places a
/// hypersphere on every sampled point, with radius equal to the distance to
/// its nearest fellow sample. A query covered by spheres takes the smallest
/// one, c, and scores 1 - radius(nn(c)) / radius(c); uncovered queries score 1.
struct InneDetector {
  struct Estimator {
    Matrix centers;
    Vector radius;
    std::vector<std::size_t> nearest;  // index of each center's nearest fellow
  };

  int n_estimators = 51;
  int max_samples = 8;
  std::uint64_t seed = 0;
  std::vector<Estimator> estimators;
  Eigen::Index n_features = 0;

  void fit(const Matrix& x) {
    require_rows(x, 2, "INNE");
    n_features = x.cols();
    const std::size_t psi = std::min<std::size_t>(static_cast<std::size_t>(max_samples), static_cast<std::size_t>(x.rows()));
    const RngHandle root(seed, "inne");
    estimators.assign(static_cast<std::size_t>(n_estimators), {});
    for (int t = 0; t < n_estimators; ++t) {
      Rng rng(root.split("estimator", static_cast<std::uint64_t>(t)));
      const auto rows = rng.sample_without_replacement(static_cast<std::size_t>(x.rows()), psi);
      Estimator& est = estimators[static_cast<std::size_t>(t)];
      est.centers.resize(static_cast<Eigen::Index>(psi), x.cols());
      for (std::size_t i = 0; i < psi; ++i) est.centers.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
      est.radius.resize(static_cast<Eigen::Index>(psi));
      est.nearest.resize(psi);
      for (std::size_t i = 0; i < psi; ++i) {
        const Neighbors nb = k_nearest(est.centers, est.centers.row(static_cast<Eigen::Index>(i)), 1, i);
        est.nearest[i] = nb.index[0];
        est.radius(static_cast<Eigen::Index>(i)) = nb.distance[0];
      }
    }
  }

  Vector score(const Matrix& x) const {
    require_cols(n_features, x, "INNE");
    Vector s = Vector::Zero(x.rows());
    for (const auto& est : estimators) {
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::Index best = -1;
        double best_r = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < est.centers.rows(); ++c) {
          const double r = est.radius(c);
          if ((est.centers.row(c) - x.row(i)).norm() <= r && r < best_r) {
            best_r = r;
            best = c;
          }
        }
        double iso = 1.0;
        if (best >= 0) {
          const double rn = est.radius(static_cast<Eigen::Index>(est.nearest[static_cast<std::size_t>(best)]));
          iso = best_r > 0.0 ? 1.0 - rn / best_r : 0.0;
        }
        s(i) += iso;
      }
    }
    return s / static_cast<double>(estimators.size());
  }
};

}  // namespace envshift::detectors
