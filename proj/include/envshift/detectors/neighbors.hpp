#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "envshift/core.hpp"

namespace envshift::detectors {

struct Neighbors {
  std::vector<std::size_t> index;  // ascending distance, ties by lower index
  std::vector<double> distance;    // Euclidean
};

/// Exact k nearest rows of `ref` to `query`, optionally skipping one row.
inline Neighbors k_nearest(const Matrix& ref, const Eigen::RowVectorXd& query, std::size_t k,
                           std::size_t skip = std::numeric_limits<std::size_t>::max()) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(static_cast<std::size_t>(ref.rows()));
  for (Eigen::Index i = 0; i < ref.rows(); ++i) {
    if (static_cast<std::size_t>(i) == skip) continue;
    d.emplace_back((ref.row(i) - query).squaredNorm(), static_cast<std::size_t>(i));
  }
  k = std::min(k, d.size());
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  Neighbors out;
  for (std::size_t i = 0; i < k; ++i) {
    out.index.push_back(d[i].second);
    out.distance.push_back(std::sqrt(d[i].first));
  }
  return out;
}

inline void require_rows(const Matrix& x, Eigen::Index minimum, const char* who) {
  if (x.rows() < minimum) {
    throw InsufficientData(std::string(who) + " needs >= " + std::to_string(minimum) + " training rows, got " +
                           std::to_string(x.rows()));
  }
}

inline void require_cols(Eigen::Index expected, const Matrix& x, const char* who) {
  if (x.cols() != expected) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(expected) + " columns, got " + std::to_string(x.cols()));
  }
}

}  // namespace envshift::detectors
