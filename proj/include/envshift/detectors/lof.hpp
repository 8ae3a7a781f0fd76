#pragma once

#include "envshift/detectors/neighbors.hpp"

namespace envshift::detectors {

/// Local outlier factor in novelty mode: neighbourhoods of query rows are
/// taken from the training rows only.
struct LofDetector {
  int k = 5;
  Matrix train;
  Vector k_distance;  // per training row
  Vector lrd;         // local reachability density per training row

  double reach_density(const Neighbors& nb) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < nb.index.size(); ++j) {
      sum += std::max(k_distance(static_cast<Eigen::Index>(nb.index[j])), nb.distance[j]);
    }
    return 1.0 / (sum / static_cast<double>(nb.index.size()) + 1e-10);
  }

  void fit(const Matrix& x) {
    require_rows(x, k + 1, "LOF");
    train = x;
    const Eigen::Index n = x.rows();
    std::vector<Neighbors> nbs;
    nbs.reserve(static_cast<std::size_t>(n));
    k_distance.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      nbs.push_back(k_nearest(x, x.row(i), static_cast<std::size_t>(k), static_cast<std::size_t>(i)));
      k_distance(i) = nbs.back().distance.back();
    }
    lrd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) lrd(i) = reach_density(nbs[static_cast<std::size_t>(i)]);
  }

  Vector score(const Matrix& x) const {
    require_cols(train.cols(), x, "LOF");
    Vector s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Neighbors nb = k_nearest(train, x.row(i), static_cast<std::size_t>(k));
      const double own = reach_density(nb);
      double ratio = 0.0;
      for (auto j : nb.index) ratio += lrd(static_cast<Eigen::Index>(j)) / own;
      s(i) = ratio / static_cast<double>(nb.index.size());
    }
    return s;
  }
};

}  // namespace envshift::detectors
