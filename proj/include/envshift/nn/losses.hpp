#pragma once

#include <cmath>
#include <functional>

#include "envshift/nn/mlp.hpp"

namespace envshift::nn {

enum class LossKind { BCE, MSE, Hook };

/// A loss evaluated on the network output: value plus dL/d(output).
struct OutputLoss {
  double value = 0.0;
  Matrix grad_output;
};

/// Custom output loss, e.g. the contrastive objective.
using LossHook = std::function<OutputLoss(const Matrix& output)>;

struct Batch {
  Matrix inputs;
  Matrix targets;  // n x out_dim; unused by Hook losses
};

struct LossAndGrad {
  double loss = 0.0;
  MlpParams grads;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Mean binary cross-entropy on logits.
inline OutputLoss bce_with_logits(const Matrix& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) throw ShapeError("BCE: logits/targets shape mismatch");
  const double n = static_cast<double>(logits.size());
  OutputLoss out;
  out.grad_output.resize(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const double z = logits(i, j);
      const double y = targets(i, j);
      total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
      out.grad_output(i, j) = (sigmoid(z) - y) / n;
    }
  }
  out.value = total / n;
  return out;
}

/// Mean squared error over all entries.
inline OutputLoss mse(const Matrix& output, const Matrix& targets) {
  if (output.rows() != targets.rows() || output.cols() != targets.cols()) throw ShapeError("MSE: output/target shape mismatch");
  const double n = static_cast<double>(output.size());
  OutputLoss out;
  const Matrix diff = output - targets;
  out.value = diff.squaredNorm() / n;
  out.grad_output = (2.0 / n) * diff;
  return out;
}

inline OutputLoss evaluate_output_loss(const Matrix& output, const Batch& batch, LossKind kind, const LossHook& hook) {
  switch (kind) {
    case LossKind::BCE: return bce_with_logits(output, batch.targets);
    case LossKind::MSE: return mse(output, batch.targets);
    case LossKind::Hook:
      if (!hook) throw ConfigError("LossKind::Hook requires a hook");
      return hook(output);
  }
  throw ConfigError("unknown loss kind");
}

inline LossAndGrad loss_and_grad(const MlpParams& p, const Batch& batch, LossKind kind, const LossHook& hook = {}) {
  if (batch.inputs.rows() == 0) throw ShapeError("empty batch");
  const ForwardCache cache = forward_cached(p, batch.inputs);
  OutputLoss l = evaluate_output_loss(cache.result(), batch, kind, hook);
  if (!std::isfinite(l.value)) throw NumericalError("loss is not finite", first_nonfinite_layer(cache));
  return {l.value, backward(p, cache, l.grad_output)};
}

}  // namespace envshift::nn
