#pragma once

#include "envshift/detectors/neighbors.hpp"

namespace envshift::detectors {

/// Distance to the k-th nearest training row.
struct KnnDetector {
  int k = 5;
  Matrix train;

  void fit(const Matrix& x) {
    require_rows(x, k + 1, "KNN");
    train = x;
  }

  Vector score(const Matrix& x) const {
    require_cols(train.cols(), x, "KNN");
    Vector s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) s(i) = k_nearest(train, x.row(i), static_cast<std::size_t>(k)).distance.back();
    return s;
  }
};

}  // namespace envshift::detectors
