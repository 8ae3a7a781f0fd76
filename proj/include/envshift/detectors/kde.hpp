#pragma once

#include <cmath>
#include <limits>

#include "envshift/detectors/neighbors.hpp"

namespace envshift::detectors {

enum class BandwidthRule { Fixed, Scott };

/// Negative log of a Gaussian kernel density estimate.
struct KdeDetector {
  double bandwidth = 1.0;
  BandwidthRule rule = BandwidthRule::Fixed;
  Matrix train;

  void fit(const Matrix& x) {
    require_rows(x, 1, "KDE");
    train = x;
    if (rule == BandwidthRule::Scott) {
      bandwidth = std::pow(static_cast<double>(x.rows()), -1.0 / (static_cast<double>(x.cols()) + 4.0));
    }
    if (!(bandwidth > 0.0)) throw ConfigError("KDE bandwidth must be > 0");
  }

  Vector score(const Matrix& x) const {
    require_cols(train.cols(), x, "KDE");
    const double h2 = bandwidth * bandwidth;
    const double d = static_cast<double>(train.cols());
    const double log_norm = std::log(static_cast<double>(train.rows())) + 0.5 * d * std::log(2.0 * 3.14159265358979323846 * h2);
    Vector s(x.rows());
    std::vector<double> e(static_cast<std::size_t>(train.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < train.rows(); ++j) {
        e[static_cast<std::size_t>(j)] = -(train.row(j) - x.row(i)).squaredNorm() / (2.0 * h2);
        mx = std::max(mx, e[static_cast<std::size_t>(j)]);
      }
      double acc = 0.0;
      for (double v : e) acc += std::exp(v - mx);
      s(i) = -(mx + std::log(acc) - log_norm);
    }
    return s;
  }
};

}  // namespace envshift::detectors
