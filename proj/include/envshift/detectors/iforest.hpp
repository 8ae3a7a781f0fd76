#pragma once

#include <cmath>
#include <vector>

#include "envshift/detectors/neighbors.hpp"
#include "envshift/rng.hpp"

namespace envshift::detectors {

/// Average path length of an unsuccessful BST search over n points.
inline double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  if (n <= 2.0) return 1.0;
  return 2.0 * (std::log(n - 1.0) + 0.5772156649015329) - 2.0 * (n - 1.0) / n;
}

struct IsolationTree {
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::size_t size = 0;
  };
  std::vector<Node> nodes;

  double path_length(const Eigen::RowVectorXd& x) const {
    int cur = 0;
    double depth = 0.0;
    while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
      const Node& nd = nodes[static_cast<std::size_t>(cur)];
      cur = x(nd.feature) < nd.threshold ? nd.left : nd.right;
      depth += 1.0;
    }
    return depth + average_path_length(static_cast<double>(nodes[static_cast<std::size_t>(cur)].size));
  }
};

/// Isolation forest: random axis-aligned splits on subsamples.
struct IsolationForestDetector {
  int n_trees = 100;
  int max_samples = 256;
  std::uint64_t seed = 0;
  std::vector<IsolationTree> trees;
  std::size_t subsample = 0;
  Eigen::Index n_features = 0;

  void fit(const Matrix& x) {
    require_rows(x, 2, "IsoForest");
    n_features = x.cols();
    subsample = std::min<std::size_t>(static_cast<std::size_t>(max_samples), static_cast<std::size_t>(x.rows()));
    const int height_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(subsample, 2)))));
    const RngHandle root(seed, "isoforest");
    trees.assign(static_cast<std::size_t>(n_trees), {});
    for (int t = 0; t < n_trees; ++t) {
      Rng rng(root.split("tree", static_cast<std::uint64_t>(t)));
      auto rows = rng.sample_without_replacement(static_cast<std::size_t>(x.rows()), subsample);
      build(trees[static_cast<std::size_t>(t)], x, rows, 0, height_limit, rng);
    }
  }

  Vector score(const Matrix& x) const {
    require_cols(n_features, x, "IsoForest");
    const double c = average_path_length(static_cast<double>(subsample));
    Vector s(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double total = 0.0;
      for (const auto& t : trees) total += t.path_length(x.row(i));
      s(i) = std::pow(2.0, -(total / static_cast<double>(trees.size())) / c);
    }
    return s;
  }

 private:
  static int build(IsolationTree& tree, const Matrix& x, std::vector<std::size_t>& rows, int depth, int limit, Rng& rng) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.back().size = rows.size();
    if (depth >= limit || rows.size() <= 1) return id;

    std::vector<int> candidates;
    std::vector<std::pair<double, double>> ranges;
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      double lo = x(static_cast<Eigen::Index>(rows[0]), f), hi = lo;
      for (auto r : rows) {
        lo = std::min(lo, x(static_cast<Eigen::Index>(r), f));
        hi = std::max(hi, x(static_cast<Eigen::Index>(r), f));
      }
      if (hi > lo) {
        candidates.push_back(static_cast<int>(f));
        ranges.emplace_back(lo, hi);
      }
    }
    if (candidates.empty()) return id;
    const std::size_t pick = rng.uniform_index(candidates.size());
    const int feature = candidates[pick];
    double threshold = rng.uniform(ranges[pick].first, ranges[pick].second);
    if (threshold <= ranges[pick].first) threshold = std::nextafter(ranges[pick].first, ranges[pick].second);

    std::vector<std::size_t> left, right;
    for (auto r : rows) (x(static_cast<Eigen::Index>(r), feature) < threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = build(tree, x, left, depth + 1, limit, rng);
    const int rr = build(tree, x, right, depth + 1, limit, rng);
    auto& nd = tree.nodes[static_cast<std::size_t>(id)];
    nd.feature = feature;
    nd.threshold = threshold;
    nd.left = l;
    nd.right = rr;
    return id;
  }
};

}  // namespace envshift::detectors
