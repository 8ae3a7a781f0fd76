#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "envshift/detectors/neighbors.hpp"

namespace envshift::detectors {

/// nu one-class SVM with an RBF kernel, solved by SMO with second-order
/// working-set selection. Dual variables are scaled to [0, 1] with
/// sum(alpha) = nu * n; decision f(x) = sum_i alpha_i K(x_i, x) - rho.
struct OneClassSvmDetector {
  double nu = 0.5;
  double gamma = 0.0;  // <= 0 means 1 / n_features
  double tolerance = 1e-4;
  long max_passes = 10000;

  Matrix support;
  Vector coef;
  double rho = 0.0;
  double fitted_gamma = 0.0;
  long iterations = 0;
  bool converged = false;

  double kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
    return std::exp(-fitted_gamma * (a - b).squaredNorm());
  }

  void fit(const Matrix& x) {
    require_rows(x, 2, "OCSVM");
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("OCSVM nu must lie in (0, 1]");
    const Eigen::Index n = x.rows();
    fitted_gamma = gamma > 0.0 ? gamma : 1.0 / static_cast<double>(x.cols());

    Matrix q(n, n);
    const Vector sq = x.rowwise().squaredNorm();
    q.noalias() = x * x.transpose();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) q(i, j) = std::exp(-fitted_gamma * std::max(0.0, sq(i) + sq(j) - 2.0 * q(i, j)));

    Vector alpha = Vector::Zero(n);
    const double total = nu * static_cast<double>(n);
    const auto full = static_cast<Eigen::Index>(total);
    for (Eigen::Index i = 0; i < std::min(full, n); ++i) alpha(i) = 1.0;
    if (full < n) alpha(full) = total - static_cast<double>(full);
    Vector g = q * alpha;

    constexpr double kTau = 1e-12;
    const long max_iter = max_passes * static_cast<long>(n);
    converged = false;
    for (iterations = 0; iterations < max_iter; ++iterations) {
      // i: steepest ascent among variables that can grow.
      double gmax = -std::numeric_limits<double>::infinity();
      Eigen::Index i = -1;
      for (Eigen::Index t = 0; t < n; ++t) {
        if (alpha(t) < 1.0 && -g(t) >= gmax) {
          gmax = -g(t);
          i = t;
        }
      }
      double gmax2 = -std::numeric_limits<double>::infinity();
      Eigen::Index j = -1;
      double best_obj = std::numeric_limits<double>::infinity();
      for (Eigen::Index t = 0; t < n; ++t) {
        if (alpha(t) <= 0.0) continue;
        gmax2 = std::max(gmax2, g(t));
        if (i < 0) continue;
        const double b = gmax + g(t);
        if (b > 0.0) {
          double a = q(i, i) + q(t, t) - 2.0 * q(i, t);
          if (a <= 0.0) a = kTau;
          const double obj = -(b * b) / a;
          if (obj <= best_obj) {
            best_obj = obj;
            j = t;
          }
        }
      }
      if (i < 0 || j < 0 || gmax + gmax2 < tolerance) {
        converged = true;
        break;
      }
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double old_i = alpha(i), old_j = alpha(j);
      const double delta = (g(i) - g(j)) / quad;
      const double sum = old_i + old_j;
      double ai = old_i - delta, aj = old_j + delta;
      if (sum > 1.0) {
        if (ai > 1.0) {
          ai = 1.0;
          aj = sum - 1.0;
        }
      } else if (aj < 0.0) {
        aj = 0.0;
        ai = sum;
      }
      if (sum > 1.0) {
        if (aj > 1.0) {
          aj = 1.0;
          ai = sum - 1.0;
        }
      } else if (ai < 0.0) {
        ai = 0.0;
        aj = sum;
      }
      alpha(i) = ai;
      alpha(j) = aj;
      g += q.col(i) * (ai - old_i) + q.col(j) * (aj - old_j);
    }

    // rho: mean gradient over free variables, else midpoint of the bounds.
    double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    long n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
      if (alpha(t) >= 1.0) lb = std::max(lb, g(t));
      else if (alpha(t) <= 0.0) ub = std::min(ub, g(t));
      else {
        sum_free += g(t);
        ++n_free;
      }
    }
    rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);

    std::vector<Eigen::Index> sv;
    for (Eigen::Index t = 0; t < n; ++t)
      if (alpha(t) > 0.0) sv.push_back(t);
    support.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
    coef.resize(static_cast<Eigen::Index>(sv.size()));
    for (std::size_t s = 0; s < sv.size(); ++s) {
      support.row(static_cast<Eigen::Index>(s)) = x.row(sv[s]);
      coef(static_cast<Eigen::Index>(s)) = alpha(sv[s]);
    }
  }

  Vector decision_function(const Matrix& x) const {
    require_cols(support.cols(), x, "OCSVM");
    Vector f(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double acc = 0.0;
      for (Eigen::Index s = 0; s < support.rows(); ++s) acc += coef(s) * kernel(support.row(s), x.row(i));
      f(i) = acc - rho;
    }
    return f;
  }

  Vector score(const Matrix& x) const { return -decision_function(x); }
};

}  // namespace envshift::detectors
