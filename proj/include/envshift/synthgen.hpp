#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "envshift/config.hpp"
#include "envshift/core.hpp"
#include "envshift/rng.hpp"

namespace envshift {

/// Multi-environment scenario. Field names double as config-file keys.
/// Defaults are the regime-D "mirror" scenario used by the benchmark.
struct ScenarioConfig {
  Regime regime = Regime::D;
  int n_train_envs = 6;
  int n_test_envs = 3;
  int samples_per_env = 200;
  double anomaly_fraction_test = 0.25;
  int d_content = 4;
  int d_style = 8;
  int d_x = 32;
  double style_shift_scale = 4.0;
  double spurious_strength = 3.0;
  double noise_sigma = 0.5;
  std::uint64_t seed = 0;

  /// Anomaly fraction after the regime rule (A/B carry no anomalies).
  double effective_anomaly_fraction() const { return has_anomalies(regime) ? anomaly_fraction_test : 0.0; }

  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (n_train_envs < 1) fail("n_train_envs", "must be >= 1");
    if (n_test_envs < 1) fail("n_test_envs", "must be >= 1");
    if (samples_per_env < 4) fail("samples_per_env", "must be >= 4");
    if (d_content < 1) fail("d_content", "must be >= 1");
    if (d_style < 0) fail("d_style", "must be >= 0");
    if (d_x < d_content + d_style) fail("d_x", "must be >= d_content + d_style");
    if (!(style_shift_scale >= 0.0) || !std::isfinite(style_shift_scale)) fail("style_shift_scale", "must be finite and >= 0");
    if (!(spurious_strength >= 0.0) || !std::isfinite(spurious_strength)) fail("spurious_strength", "must be finite and >= 0");
    if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) fail("noise_sigma", "must be finite and > 0");
    if (has_anomalies(regime) && !(anomaly_fraction_test > 0.0 && anomaly_fraction_test < 1.0)) {
      fail("anomaly_fraction_test", "must lie in (0, 1) for regimes C and D");
    }
  }

  static ScenarioConfig from_config(const KeyValueConfig& kv) {
    ScenarioConfig c;
    c.regime = parse_regime(kv.get<std::string>("regime", std::string(to_string(c.regime))));
    c.n_train_envs = kv.get("n_train_envs", c.n_train_envs);
    c.n_test_envs = kv.get("n_test_envs", c.n_test_envs);
    c.samples_per_env = kv.get("samples_per_env", c.samples_per_env);
    c.anomaly_fraction_test = kv.get("anomaly_fraction_test", c.anomaly_fraction_test);
    c.d_content = kv.get("d_content", c.d_content);
    c.d_style = kv.get("d_style", c.d_style);
    c.d_x = kv.get("d_x", c.d_x);
    c.style_shift_scale = kv.get("style_shift_scale", c.style_shift_scale);
    c.spurious_strength = kv.get("spurious_strength", c.spurious_strength);
    c.noise_sigma = kv.get("noise_sigma", c.noise_sigma);
    c.seed = kv.get("seed", c.seed);
    c.validate();
    return c;
  }

  /// Canonical key=value text; its hash names checkpoints and report rows.
  std::string canonical() const {
    std::string out;
    out += "anomaly_fraction_test=" + format_double(anomaly_fraction_test) + "\n";
    out += "d_content=" + std::to_string(d_content) + "\n";
    out += "d_style=" + std::to_string(d_style) + "\n";
    out += "d_x=" + std::to_string(d_x) + "\n";
    out += "n_test_envs=" + std::to_string(n_test_envs) + "\n";
    out += "n_train_envs=" + std::to_string(n_train_envs) + "\n";
    out += "noise_sigma=" + format_double(noise_sigma) + "\n";
    out += "regime=" + std::string(to_string(regime)) + "\n";
    out += "samples_per_env=" + std::to_string(samples_per_env) + "\n";
    out += "seed=" + std::to_string(seed) + "\n";
    out += "spurious_strength=" + format_double(spurious_strength) + "\n";
    out += "style_shift_scale=" + format_double(style_shift_scale) + "\n";
    return out;
  }

  /// Hash of everything except the seed.
  std::uint64_t fingerprint() const {
    ScenarioConfig c = *this;
    c.seed = 0;
    return fnv1a(c.canonical());
  }
};

/// Linear observation model: Content and Style live in orthonormal,
/// mutually orthogonal column blocks of the mixing matrix.
struct MixingModel {
  Matrix content_basis;                  // d_x x d_content (W_C)
  Matrix style_basis;                    // d_x x d_style   (W_S)
  std::array<Vector, 3> prototypes;      // Normal0, Normal1, Anomaly in content space
  Vector spurious_direction;             // unit vector in style space (empty when d_style == 0)
};

struct EnvParams {
  int env_id = 0;
  Vector style_mean;
  Vector style_scale;
  std::array<Vector, 3> spurious_shift;  // indexed by ContentLabel

  bool same_distribution(const EnvParams& o) const {
    return style_mean == o.style_mean && style_scale == o.style_scale &&
           spurious_shift[0] == o.spurious_shift[0] && spurious_shift[1] == o.spurious_shift[1] &&
           spurious_shift[2] == o.spurious_shift[2];
  }
};

namespace synth_detail {
// Minimum pairwise distance between content prototypes.
inline constexpr double kPrototypeSeparation = 2.0;
// Train style means are N(0, (kTrainStyleSpread * style_shift_scale)^2 I).
inline constexpr double kTrainStyleSpread = 0.5;
inline constexpr double kStyleScaleLo = 0.2;
inline constexpr double kStyleScaleHi = 0.6;
inline constexpr double kSpuriousCoefLo = 0.5;
inline constexpr double kSpuriousCoefHi = 1.5;
// Per-env wobble of the shared spurious direction.
inline constexpr double kSpuriousDirectionJitter = 0.5;
// Chance that a train env reverses which normal class gets +shift.
inline constexpr double kSpuriousSignFlip = 0.5;
inline constexpr int kGapRetries = 32;
// Candidates are placed slightly past the gap so that the base env's own
// distance check is not decided by rounding.
inline constexpr double kGapMargin = 1e-9;

inline Vector standard_normal(Rng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

inline double min_distance(const Vector& x, std::span<const EnvParams> train) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : train) best = std::min(best, (x - p.style_mean).norm());
  return best;
}
}  // namespace synth_detail

inline MixingModel build_mixing_model(const ScenarioConfig& cfg, const RngHandle& handle) {
  if (cfg.d_content < 1 || cfg.d_style < 0 || cfg.d_x < cfg.d_content + cfg.d_style) {
    throw ConfigError("d_x must be >= d_content + d_style");
  }
  Rng rng(handle.split("mixing"));
  const Eigen::Index k = cfg.d_content + cfg.d_style;
  Matrix g(cfg.d_x, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < cfg.d_x; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  const Matrix q = qr.householderQ() * Matrix::Identity(cfg.d_x, k);

  MixingModel m;
  m.content_basis = q.leftCols(cfg.d_content);
  m.style_basis = q.rightCols(cfg.d_style);

  Rng proto_rng(handle.split("prototypes"));
  for (auto& p : m.prototypes) p = synth_detail::standard_normal(proto_rng, cfg.d_content);
  double min_gap = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) min_gap = std::min(min_gap, (m.prototypes[i] - m.prototypes[j]).norm());
  if (!(min_gap > 0.0)) throw ConfigError("degenerate content prototypes");
  // Rescale about the origin; the tiny factor keeps the bound after rounding.
  const double factor = synth_detail::kPrototypeSeparation / min_gap * (1.0 + 1e-12);
  for (auto& p : m.prototypes) p *= factor;

  if (cfg.d_style > 0) {
    Rng dir_rng(handle.split("spurious-direction"));
    Vector u = synth_detail::standard_normal(dir_rng, cfg.d_style);
    m.spurious_direction = u / u.norm();
  }
  return m;
}

/// Parameters of one environment. Train envs are drawn fresh. Test envs start
/// from a train env (`env_id mod n_train_envs`); in regimes B and D their
/// Style mean is moved to at least `style_shift_scale` from every train mean
/// and the content-conditional style shift is reversed.
inline EnvParams sample_env_params(const ScenarioConfig& cfg, const MixingModel& mix, int env_id, bool is_test,
                                   std::span<const EnvParams> train_params, const RngHandle& handle) {
  using namespace synth_detail;
  Rng rng(handle.split("env-params", static_cast<std::uint64_t>(env_id)));
  const Eigen::Index ds = cfg.d_style;

  if (!is_test) {
    EnvParams p;
    p.env_id = env_id;
    p.style_mean = standard_normal(rng, ds) * (kTrainStyleSpread * cfg.style_shift_scale);
    p.style_scale.resize(ds);
    for (Eigen::Index i = 0; i < ds; ++i) p.style_scale(i) = rng.uniform(kStyleScaleLo, kStyleScaleHi);
    Vector dir = Vector::Zero(ds);
    double coef = rng.uniform(kSpuriousCoefLo, kSpuriousCoefHi);
    if (ds > 0) {
      dir = mix.spurious_direction + kSpuriousDirectionJitter * standard_normal(rng, ds) / std::sqrt(double(ds));
      dir /= dir.norm();
    }
    if (rng.uniform() < kSpuriousSignFlip) dir = -dir;
    // Anomalies take the style shift of one normal class.
    const bool anomaly_positive = rng.uniform() < 0.5;
    const Vector shift = (0.5 * cfg.spurious_strength * coef) * dir;
    p.spurious_shift[0] = shift;
    p.spurious_shift[1] = -shift;
    p.spurious_shift[2] = anomaly_positive ? shift : Vector(-shift);
    return p;
  }

  if (train_params.empty()) throw ConfigError("test env params need the train env params");
  const std::size_t base_idx = static_cast<std::size_t>(env_id) % train_params.size();
  EnvParams p = train_params[base_idx];
  p.env_id = env_id;
  if (!style_shifted(cfg.regime)) return p;

  std::swap(p.spurious_shift[0], p.spurious_shift[1]);
  const double gap = cfg.style_shift_scale;
  if (gap <= 0.0 || ds == 0) return p;

  const Vector base = p.style_mean;
  const double reach = gap * (1.0 + kGapMargin);
  Vector dir;
  for (int attempt = 0; attempt < kGapRetries; ++attempt) {
    dir = standard_normal(rng, ds);
    dir /= dir.norm();
    Vector candidate = base + reach * dir;
    if (min_distance(candidate, train_params) >= gap) {
      p.style_mean = candidate;
      return p;
    }
  }
  // Out of retries: push along the last direction until the gap holds.
  double step = reach;
  Vector candidate = base + step * dir;
  while (min_distance(candidate, train_params) < gap) {
    step *= 1.25;
    candidate = base + step * dir;
  }
  p.style_mean = candidate;
  return p;
}

struct GeneratedScenario {
  EnvDataset dataset;
  MixingModel mixing;
  std::vector<EnvParams> train_params;
  std::vector<EnvParams> test_params;
};

namespace synth_detail {

inline void emit_env(const ScenarioConfig& cfg, const MixingModel& mix, const EnvParams& p, Split split,
                     std::vector<ContentLabel> labels, const RngHandle& root, EnvDataset& ds) {
  Rng label_rng(root.split("labels", static_cast<std::uint64_t>(p.env_id)));
  label_rng.shuffle(labels);
  Rng rng(root.split("samples", static_cast<std::uint64_t>(p.env_id)));
  const double sigma = cfg.noise_sigma;
  for (ContentLabel c : labels) {
    const int ci = static_cast<int>(c);
    const Vector content = mix.prototypes[ci] + sigma * standard_normal(rng, cfg.d_content);
    Vector style = p.style_mean + p.spurious_shift[ci];
    for (Eigen::Index i = 0; i < cfg.d_style; ++i) style(i) += p.style_scale(i) * rng.normal();
    Vector x = mix.content_basis * content;
    if (cfg.d_style > 0) x += mix.style_basis * style;
    for (Eigen::Index i = 0; i < cfg.d_x; ++i) x(i) += sigma * rng.normal();
    Sample s;
    s.features.assign(x.data(), x.data() + x.size());
    s.env_id = p.env_id;
    s.content_label = c;
    s.split = split;
    ds.samples.push_back(std::move(s));
  }
}

}  // namespace synth_detail

/// Generates the dataset together with the latent model that produced it.
inline GeneratedScenario generate_scenario_detailed(const ScenarioConfig& cfg) {
  cfg.validate();
  const RngHandle root(cfg.seed, "synthgen");
  GeneratedScenario out;
  out.mixing = build_mixing_model(cfg, root);

  EnvDataset& ds = out.dataset;
  ds.d_x = cfg.d_x;
  ds.regime = cfg.regime;
  ds.seed = cfg.seed;

  for (int e = 0; e < cfg.n_train_envs; ++e) {
    out.train_params.push_back(sample_env_params(cfg, out.mixing, e, false, {}, root));
    ds.train_envs.insert(e);
  }
  for (int t = 0; t < cfg.n_test_envs; ++t) {
    const int id = cfg.n_train_envs + t;
    out.test_params.push_back(sample_env_params(cfg, out.mixing, id, true, out.train_params, root));
    ds.test_envs.insert(id);
  }

  const int n = cfg.samples_per_env;
  for (const auto& p : out.train_params) {
    std::vector<ContentLabel> labels(static_cast<std::size_t>(n), ContentLabel::Normal1);
    std::fill(labels.begin(), labels.begin() + n / 2, ContentLabel::Normal0);
    synth_detail::emit_env(cfg, out.mixing, p, Split::Train, std::move(labels), root, ds);
  }
  const int n_anomalies = static_cast<int>(std::llround(cfg.effective_anomaly_fraction() * n));
  const int n_normals = n - n_anomalies;
  for (const auto& p : out.test_params) {
    std::vector<ContentLabel> labels(static_cast<std::size_t>(n), ContentLabel::Anomaly);
    std::fill(labels.begin(), labels.begin() + n_normals, ContentLabel::Normal1);
    std::fill(labels.begin(), labels.begin() + n_normals / 2, ContentLabel::Normal0);
    synth_detail::emit_env(cfg, out.mixing, p, Split::Test, std::move(labels), root, ds);
  }
  ds.validate();
  return out;
}

inline EnvDataset generate_scenario(const ScenarioConfig& cfg) { return generate_scenario_detailed(cfg).dataset; }

}  // namespace envshift
