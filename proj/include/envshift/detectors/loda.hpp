#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "envshift/detectors/neighbors.hpp"
#include "envshift/rng.hpp"

namespace envshift::detectors {

/// Lightweight on-line detector of anomalies: sparse random projections, a
/// fixed-width histogram per projection, score = -mean log density.
struct LodaDetector {
  int n_bins = 25;
  int n_random_cuts = 100;
  std::uint64_t seed = 0;

  Matrix projections;             // n_random_cuts x d, sparse rows
  Vector lo, width;               // histogram range per projection
  std::vector<std::vector<double>> counts;
  double n_train = 0.0;

  void fit(const Matrix& x) {
    require_rows(x, 2, "LODA");
    const Eigen::Index d = x.cols();
    const auto nnz = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
    const RngHandle root(seed, "loda");
    projections = Matrix::Zero(n_random_cuts, d);
    for (int p = 0; p < n_random_cuts; ++p) {
      Rng rng(root.split("projection", static_cast<std::uint64_t>(p)));
      for (auto f : rng.sample_without_replacement(static_cast<std::size_t>(d), nnz)) {
        projections(p, static_cast<Eigen::Index>(f)) = rng.normal();
      }
    }
    n_train = static_cast<double>(x.rows());
    const Matrix z = x * projections.transpose();
    lo.resize(n_random_cuts);
    width.resize(n_random_cuts);
    counts.assign(static_cast<std::size_t>(n_random_cuts), std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
    for (int p = 0; p < n_random_cuts; ++p) {
      double a = z.col(p).minCoeff(), b = z.col(p).maxCoeff();
      if (!(b > a)) {
        a -= 0.5;
        b += 0.5;
      }
      lo(p) = a;
      width(p) = (b - a) / n_bins;
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        counts[static_cast<std::size_t>(p)][static_cast<std::size_t>(train_bin(p, z(i, p)))] += 1.0;
      }
    }
  }

  /// Bin index, or -1 outside the training range. The top edge is inclusive.
  int bin(int p, double v) const {
    const double t = (v - lo(p)) / width(p);
    if (t < 0.0 || t > n_bins) return -1;
    return std::min(static_cast<int>(t), n_bins - 1);
  }

  int train_bin(int p, double v) const {
    const double t = (v - lo(p)) / width(p);
    return std::clamp(static_cast<int>(t), 0, n_bins - 1);
  }

  /// Laplace-smoothed density of value v under projection p.
  double density(int p, double v) const {
    const int b = bin(p, v);
    const double c = b < 0 ? 0.0 : counts[static_cast<std::size_t>(p)][static_cast<std::size_t>(b)];
    return (c + 1.0) / (n_train + n_bins) / width(p);
  }

  Vector score(const Matrix& x) const {
    require_cols(projections.cols(), x, "LODA");
    const Matrix z = x * projections.transpose();
    Vector s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double acc = 0.0;
      for (int p = 0; p < n_random_cuts; ++p) acc += std::log(density(p, z(i, p)));
      s(i) = -acc / n_random_cuts;
    }
    return s;
  }
};

}  // namespace envshift::detectors
