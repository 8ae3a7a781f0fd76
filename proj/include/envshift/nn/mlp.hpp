#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "envshift/core.hpp"
#include "envshift/rng.hpp"

namespace envshift::nn {

enum class Activation { ReLU, Identity };

inline std::string_view to_string(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation activation = Activation::ReLU;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Dense feed-forward network. Also used as the container for gradients and
/// optimizer moments, which share its shape.
struct MlpParams {
  std::vector<Layer> layers;

  Eigen::Index in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Same shape and activations, all entries zero.
  MlpParams zeros_like() const {
    MlpParams z;
    for (const auto& l : layers) {
      z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size()), l.activation});
    }
    return z;
  }

  bool all_finite() const {
    for (const auto& l : layers) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  /// this += alpha * other
  void axpy(double alpha, const MlpParams& other) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += alpha * other.layers[i].weight;
      layers[i].bias += alpha * other.layers[i].bias;
    }
  }

  void scale(double alpha) {
    for (auto& l : layers) {
      l.weight *= alpha;
      l.bias *= alpha;
    }
  }

  /// Visits every scalar parameter in checkpoint order.
  template <class F>
  void for_each_scalar(F&& f) {
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) f(l.weight(r, c));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) f(l.bias(r));
    }
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      const auto& x = a.layers[i];
      const auto& y = b.layers[i];
      if (x.activation != y.activation || x.weight.rows() != y.weight.rows() || x.weight.cols() != y.weight.cols() ||
          x.weight != y.weight || x.bias != y.bias) {
        return false;
      }
    }
    return true;
  }

  /// Largest absolute element-wise difference; shapes must match.
  double max_abs_diff(const MlpParams& o) const {
    double d = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      d = std::max(d, (layers[i].weight - o.layers[i].weight).cwiseAbs().maxCoeff());
      d = std::max(d, (layers[i].bias - o.layers[i].bias).cwiseAbs().maxCoeff());
    }
    return d;
  }
};

/// Appends `tail` after `head`; dims must chain.
inline MlpParams stack(const MlpParams& head, const MlpParams& tail) {
  if (!head.layers.empty() && !tail.layers.empty() && head.out_dim() != tail.in_dim()) {
    throw ShapeError("cannot stack networks: " + std::to_string(head.out_dim()) + " -> " + std::to_string(tail.in_dim()));
  }
  MlpParams out = head;
  out.layers.insert(out.layers.end(), tail.layers.begin(), tail.layers.end());
  return out;
}

inline MlpParams slice(const MlpParams& p, std::size_t begin, std::size_t end) {
  MlpParams out;
  out.layers.assign(p.layers.begin() + static_cast<std::ptrdiff_t>(begin), p.layers.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

/// He-normal for ReLU layers, LeCun-normal for linear layers, zero biases.
inline MlpParams init_mlp(const std::vector<int>& dims, const std::vector<Activation>& activations,
                          const RngHandle& handle) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1) {
    throw ShapeError("init_mlp needs one activation per layer");
  }
  Rng rng(handle);
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw ShapeError("layer dims must be positive");
    Layer l;
    l.activation = activations[i];
    l.weight.resize(dims[i + 1], dims[i]);
    const double gain = l.activation == Activation::ReLU ? 2.0 : 1.0;
    const double std = std::sqrt(gain / dims[i]);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = std * rng.normal();
    l.bias = Vector::Zero(dims[i + 1]);
    p.layers.push_back(std::move(l));
  }
  return p;
}

/// Activations kept for the backward pass. `outputs[0]` is the input,
/// `outputs[i + 1]` the post-activation output of layer i.
struct ForwardCache {
  std::vector<Matrix> outputs;

  const Matrix& result() const { return outputs.back(); }
};

inline void check_input(const MlpParams& p, const Matrix& x) {
  if (p.layers.empty()) throw ShapeError("network has no layers");
  if (x.cols() != p.in_dim()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " columns, network expects " + std::to_string(p.in_dim()));
  }
}

inline void apply_layer(const Layer& l, const Matrix& in, Matrix& out) {
  out.noalias() = in * l.weight.transpose();
  out.rowwise() += l.bias.transpose();
  if (l.activation == Activation::ReLU) out = out.cwiseMax(0.0);
}

inline ForwardCache forward_cached(const MlpParams& p, const Matrix& x) {
  check_input(p, x);
  ForwardCache cache;
  cache.outputs.reserve(p.layers.size() + 1);
  cache.outputs.push_back(x);
  for (const auto& l : p.layers) {
    Matrix out;
    apply_layer(l, cache.outputs.back(), out);
    cache.outputs.push_back(std::move(out));
  }
  return cache;
}

inline Matrix forward(const MlpParams& p, const Matrix& x) {
  check_input(p, x);
  Matrix cur = x;
  Matrix next;
  for (const auto& l : p.layers) {
    apply_layer(l, cur, next);
    std::swap(cur, next);
  }
  return cur;
}

/// Alias of forward; rows stay aligned with the input rows.
inline Matrix encode(const MlpParams& p, const Matrix& x) { return forward(p, x); }

/// Index of the first layer with a non-finite output, or -1.
inline int first_nonfinite_layer(const ForwardCache& cache) {
  for (std::size_t i = 1; i < cache.outputs.size(); ++i) {
    if (!cache.outputs[i].allFinite()) return static_cast<int>(i - 1);
  }
  return -1;
}

/// Backpropagates dL/d(output). Returns parameter gradients; when `grad_input`
/// is non-null it receives dL/d(input).
inline MlpParams backward(const MlpParams& p, const ForwardCache& cache, const Matrix& grad_output,
                          Matrix* grad_input = nullptr) {
  MlpParams grads = p.zeros_like();
  Matrix delta = grad_output;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const Layer& l = p.layers[k];
    if (l.activation == Activation::ReLU) {
      delta = delta.cwiseProduct((cache.outputs[k + 1].array() > 0.0).cast<double>().matrix());
    }
    grads.layers[k].weight.noalias() = delta.transpose() * cache.outputs[k];
    grads.layers[k].bias = delta.colwise().sum().transpose();
    if (k > 0 || grad_input) {
      Matrix prev = delta * l.weight;
      delta = std::move(prev);
    }
  }
  if (grad_input) *grad_input = std::move(delta);
  return grads;
}

// ---------------------------------------------------------------------------
// Checkpoint format (binary):
//   "envshift-mlp 1\n"
//   "layers <L>\n"
//   "<in> <out> <relu|identity>\n"   x L
//   "data\n"
//   per layer: weight row-major (out*in float64), then bias (out float64),
//   little-endian IEEE-754.

inline std::string serialize_mlp(const MlpParams& p) {
  std::string out = "envshift-mlp 1\nlayers " + std::to_string(p.layers.size()) + "\n";
  for (const auto& l : p.layers) {
    out += std::to_string(l.in_dim()) + " " + std::to_string(l.out_dim()) + " " + std::string(to_string(l.activation)) + "\n";
  }
  out += "data\n";
  auto put = [&out](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  };
  MlpParams copy = p;
  copy.for_each_scalar(put);
  return out;
}

inline MlpParams parse_mlp(std::string_view bytes) {
  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw FormatError("truncated checkpoint header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != "envshift-mlp 1") throw FormatError("not an envshift-mlp checkpoint");
  const auto count_line = split_string(next_line(), ' ');
  if (count_line.size() != 2 || count_line[0] != "layers") throw FormatError("bad layer count line");
  const auto n_layers = static_cast<std::size_t>(parse_int(count_line[1]));
  MlpParams p;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto t = split_string(next_line(), ' ');
    if (t.size() != 3) throw FormatError("bad layer line");
    Layer l;
    const auto in = parse_int(t[0]);
    const auto outd = parse_int(t[1]);
    if (in <= 0 || outd <= 0) throw FormatError("bad layer dims");
    if (t[2] == "relu") l.activation = Activation::ReLU;
    else if (t[2] == "identity") l.activation = Activation::Identity;
    else throw FormatError("unknown activation '" + t[2] + "'");
    l.weight = Matrix::Zero(outd, in);
    l.bias = Vector::Zero(outd);
    if (!p.layers.empty() && p.layers.back().out_dim() != in) throw FormatError("layer dims do not chain");
    p.layers.push_back(std::move(l));
  }
  if (next_line() != "data") throw FormatError("missing data marker");
  if (bytes.size() - pos != p.parameter_count() * 8) throw FormatError("parameter block has the wrong size");
  p.for_each_scalar([&](double& v) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
    std::memcpy(&v, &bits, sizeof v);
    pos += 8;
  });
  return p;
}

inline void save_mlp(const MlpParams& p, const std::string& path) { write_file(path, serialize_mlp(p)); }
inline MlpParams load_mlp(const std::string& path) { return parse_mlp(read_file(path)); }

}  // namespace envshift::nn
