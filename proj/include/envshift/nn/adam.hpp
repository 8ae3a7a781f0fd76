#pragma once

#include <cmath>
#include <utility>

#include "envshift/nn/mlp.hpp"

namespace envshift::nn {

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  long step_count = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline AdamState make_adam(const MlpParams& p, double lr = 1e-3) {
  AdamState st;
  st.first_moment = p.zeros_like();
  st.second_moment = p.zeros_like();
  st.lr = lr;
  return st;
}

/// Bias-corrected Adam, in place.
inline void adam_update(MlpParams& p, const MlpParams& grads, AdamState& st) {
  if (p.layers.size() != grads.layers.size() || p.layers.size() != st.first_moment.layers.size()) {
    throw ShapeError("adam: parameter/gradient/state shapes differ");
  }
  ++st.step_count;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step_count));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step_count));
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = st.beta1 * m + (1.0 - st.beta1) * g;
    v = st.beta2 * v + (1.0 - st.beta2) * g.cwiseProduct(g);
    param.array() -= st.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + st.eps);
  };
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    update(p.layers[i].weight, grads.layers[i].weight, st.first_moment.layers[i].weight, st.second_moment.layers[i].weight);
    update(p.layers[i].bias, grads.layers[i].bias, st.first_moment.layers[i].bias, st.second_moment.layers[i].bias);
  }
}

inline std::pair<MlpParams, AdamState> adam_step(MlpParams p, const MlpParams& grads, AdamState st) {
  adam_update(p, grads, st);
  return {std::move(p), std::move(st)};
}

}  // namespace envshift::nn
