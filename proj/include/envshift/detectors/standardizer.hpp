#pragma once

#include <cmath>

#include "envshift/core.hpp"

namespace envshift::detectors {

/// Per-feature z-score with population std, floored at 1e-12.
struct Standardizer {
  Vector mean;
  Vector std;
  std::uint64_t fit_fingerprint = 0;  // fingerprint of the matrix it was fitted on

  Matrix apply(const Matrix& x) const {
    if (x.cols() != mean.size()) throw ShapeError("standardizer: column count differs from fit");
    return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
  }
};

inline Standardizer fit_standardizer(const Matrix& x_train) {
  if (x_train.rows() == 0) throw InsufficientData("standardizer needs >= 1 row");
  Standardizer s;
  const double n = static_cast<double>(x_train.rows());
  s.mean = x_train.colwise().sum().transpose() / n;
  s.std.resize(x_train.cols());
  for (Eigen::Index j = 0; j < x_train.cols(); ++j) {
    const double var = (x_train.col(j).array() - s.mean(j)).square().sum() / n;
    s.std(j) = std::max(std::sqrt(var), 1e-12);
  }
  s.fit_fingerprint = fingerprint(x_train);
  return s;
}

}  // namespace envshift::detectors
