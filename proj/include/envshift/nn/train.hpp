#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "envshift/config.hpp"
#include "envshift/nn/adam.hpp"
#include "envshift/nn/losses.hpp"

namespace envshift::nn {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  }

  static TrainConfig from_config(const KeyValueConfig& kv) { return from_config(kv, TrainConfig{}); }

  static TrainConfig from_config(const KeyValueConfig& kv, TrainConfig c) {
    c.epochs = kv.get("epochs", c.epochs);
    c.batch_size = kv.get("batch_size", c.batch_size);
    c.lr = kv.get("lr", c.lr);
    c.weight_decay = kv.get("weight_decay", c.weight_decay);
    c.validate();
    return c;
  }
};

/// Rows `idx` of `x`, in that order.
inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

/// Consecutive batches of a permutation; the final short batch is kept
/// unless it has a single row.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, int batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  const std::size_t b = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < order.size(); start += b) {
    const std::size_t end = std::min(order.size(), start + b);
    if (end - start < 2 && !batches.empty()) {
      batches.back().insert(batches.back().end(), order.begin() + static_cast<std::ptrdiff_t>(start), order.end());
      break;
    }
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

/// Adds the coupled L2 term weight_decay * p to the gradient.
inline void add_weight_decay(MlpParams& grads, const MlpParams& p, double weight_decay) {
  if (weight_decay > 0.0) grads.axpy(weight_decay, p);
}

}  // namespace envshift::nn
