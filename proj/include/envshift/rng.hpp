#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "envshift/errors.hpp"

namespace envshift {

/// 64-bit FNV-1a. Used for stream labels and for content fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Names a reproducible random stream. Children are derived by hashing the
/// parent key with a label, so a stream depends only on the path of labels
/// from the root seed and never on the order in which streams are created.
class RngHandle {
 public:
  RngHandle() = default;
  explicit RngHandle(std::uint64_t seed, std::string stream_label = "root")
      : seed_(seed), label_(std::move(stream_label)), key_(splitmix64(fnv1a(label_, splitmix64(seed)))) {}

  RngHandle split(std::string_view label) const {
    if (label.empty()) throw ConfigError("split_rng requires a non-empty label");
    RngHandle child;
    child.seed_ = seed_;
    child.label_ = label_ + "/" + std::string(label);
    child.key_ = splitmix64(fnv1a(label, key_) ^ 0x5851f42d4c957f2dULL);
    return child;
  }
  RngHandle split(std::string_view label, std::uint64_t index) const {
    return split(std::string(label) + "#" + std::to_string(index));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& stream_label() const noexcept { return label_; }
  std::uint64_t key() const noexcept { return key_; }

  friend bool operator==(const RngHandle& a, const RngHandle& b) {
    return a.key_ == b.key_ && a.seed_ == b.seed_ && a.label_ == b.label_;
  }

 private:
  std::uint64_t seed_ = 0;
  std::string label_ = "root";
  std::uint64_t key_ = splitmix64(fnv1a("root", splitmix64(0)));
};

inline RngHandle split_rng(const RngHandle& parent, std::string_view label) {
  return parent.split(label);
}

/// Draws from a stream. The engine is mt19937_64 (fully specified by the
/// standard); the distribution transforms are written out here because the
/// std:: distributions are implementation-defined and would make data files
/// differ between standard libraries.
class Rng {
 public:
  explicit Rng(const RngHandle& handle) : engine_(handle.key()) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw ConfigError("uniform_index over an empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    return x / (x + y);
  }

  /// Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    shuffle(p);
    return p;
  }

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    k = std::min(k, n);
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(p[i], p[i + uniform_index(n - i)]);
    }
    p.resize(k);
    return p;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace envshift
