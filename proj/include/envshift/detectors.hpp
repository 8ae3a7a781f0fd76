#pragma once

#include <optional>
#include <string>
#include <variant>

#include "envshift/config.hpp"
#include "envshift/detectors/iforest.hpp"
#include "envshift/detectors/inne.hpp"
#include "envshift/detectors/kde.hpp"
#include "envshift/detectors/knn.hpp"
#include "envshift/detectors/loda.hpp"
#include "envshift/detectors/lof.hpp"
#include "envshift/detectors/ocsvm.hpp"
#include "envshift/detectors/pca.hpp"
#include "envshift/detectors/standardizer.hpp"

namespace envshift {

enum class DetectorKind { IsoForest, INNE, LODA, OCSVM, PCA, LOF5, KNN, KDE };

/// Row order of the report (ensemble, linear, proximity, probabilistic).
inline constexpr DetectorKind kAllDetectors[] = {
    DetectorKind::IsoForest, DetectorKind::INNE, DetectorKind::LODA, DetectorKind::OCSVM,
    DetectorKind::PCA,       DetectorKind::LOF5, DetectorKind::KNN,  DetectorKind::KDE,
};

inline std::string_view detector_display_name(DetectorKind k) {
  switch (k) {
    case DetectorKind::IsoForest: return "IsoForest";
    case DetectorKind::INNE: return "INNE";
    case DetectorKind::LODA: return "LODA";
    case DetectorKind::OCSVM: return "OCSVM";
    case DetectorKind::PCA: return "PCA";
    case DetectorKind::LOF5: return "LOF5";
    case DetectorKind::KNN: return "KNN";
    case DetectorKind::KDE: return "KDE";
  }
  return "?";
}

inline std::string_view detector_id(DetectorKind k) {
  switch (k) {
    case DetectorKind::IsoForest: return "isoforest";
    case DetectorKind::INNE: return "inne";
    case DetectorKind::LODA: return "loda";
    case DetectorKind::OCSVM: return "ocsvm";
    case DetectorKind::PCA: return "pca";
    case DetectorKind::LOF5: return "lof5";
    case DetectorKind::KNN: return "knn";
    case DetectorKind::KDE: return "kde";
  }
  return "?";
}

inline DetectorKind parse_detector(std::string_view name) {
  for (DetectorKind k : kAllDetectors) {
    if (name == detector_id(k) || name == detector_display_name(k)) return k;
  }
  if (name == "lof" || name == "iforest") return name == "lof" ? DetectorKind::LOF5 : DetectorKind::IsoForest;
  std::string valid;
  for (DetectorKind k : kAllDetectors) valid += (valid.empty() ? "" : ", ") + std::string(detector_id(k));
  throw ConfigError("unknown detector '" + std::string(name) + "'; valid names: " + valid);
}

struct DetectorConfig {
  DetectorKind kind = DetectorKind::KNN;
  bool use_scaler = false;
  std::uint64_t seed = 0;
  // IsoForest
  int n_trees = 100;
  int isoforest_max_samples = 256;
  // INNE
  int inne_estimators = 51;
  int inne_max_samples = 8;
  // LODA
  int n_bins = 25;
  int n_random_cuts = 100;
  // OCSVM (gamma <= 0 means 1 / n_features)
  double nu = 0.5;
  double gamma = 0.0;
  double svm_tolerance = 1e-4;
  long svm_max_passes = 10000;
  // LOF / KNN
  int n_neighbors = 5;
  // KDE
  double bandwidth = 1.0;
  detectors::BandwidthRule bandwidth_rule = detectors::BandwidthRule::Fixed;

  /// One line of `key=value` pairs, echoed into report headers.
  std::string describe() const {
    std::string s = std::string(detector_id(kind)) + ": scaler=" + (use_scaler ? "on" : "off");
    switch (kind) {
      case DetectorKind::IsoForest:
        s += " trees=" + std::to_string(n_trees) + " max_samples=" + std::to_string(isoforest_max_samples);
        break;
      case DetectorKind::INNE:
        s += " estimators=" + std::to_string(inne_estimators) + " max_samples=" + std::to_string(inne_max_samples);
        break;
      case DetectorKind::LODA:
        s += " bins=" + std::to_string(n_bins) + " random_cuts=" + std::to_string(n_random_cuts);
        break;
      case DetectorKind::OCSVM:
        s += " kernel=rbf nu=" + format_double(nu) + " gamma=" + (gamma > 0 ? format_double(gamma) : std::string("auto"));
        break;
      case DetectorKind::PCA: s += " whiten=true components=all"; break;
      case DetectorKind::LOF5:
      case DetectorKind::KNN: s += " k=" + std::to_string(n_neighbors) + " metric=euclidean"; break;
      case DetectorKind::KDE:
        s += " kernel=gaussian bandwidth=" +
             (bandwidth_rule == detectors::BandwidthRule::Scott ? std::string("scott") : format_double(bandwidth));
        break;
    }
    return s;
  }
};

/// Hyperparameters tuned for the reference benchmark: scaler on for LODA,
/// OCSVM, PCA and LOF5; off for the rest.
inline DetectorConfig default_detector_config(DetectorKind kind, std::uint64_t seed = 0) {
  DetectorConfig c;
  c.kind = kind;
  c.seed = seed;
  switch (kind) {
    case DetectorKind::LODA:
    case DetectorKind::OCSVM:
    case DetectorKind::PCA:
    case DetectorKind::LOF5: c.use_scaler = true; break;
    default: c.use_scaler = false; break;
  }
  return c;
}

/// Reads overrides prefixed by the detector id, e.g. `kde.bandwidth=0.5`.
inline DetectorConfig detector_config_from(const KeyValueConfig& kv, DetectorKind kind, std::uint64_t seed) {
  DetectorConfig c = default_detector_config(kind, seed);
  const std::string p = std::string(detector_id(kind)) + ".";
  c.use_scaler = kv.get(p + "use_scaler", c.use_scaler);
  c.n_trees = kv.get(p + "n_trees", c.n_trees);
  c.isoforest_max_samples = kv.get(p + "max_samples", c.isoforest_max_samples);
  c.inne_estimators = kv.get(p + "n_estimators", c.inne_estimators);
  c.n_bins = kv.get(p + "n_bins", c.n_bins);
  c.n_random_cuts = kv.get(p + "n_random_cuts", c.n_random_cuts);
  c.nu = kv.get(p + "nu", c.nu);
  c.gamma = kv.get(p + "gamma", c.gamma);
  c.n_neighbors = kv.get(p + "n_neighbors", c.n_neighbors);
  c.bandwidth = kv.get(p + "bandwidth", c.bandwidth);
  if (kv.get<std::string>(p + "bandwidth_rule", "fixed") == "scott") c.bandwidth_rule = detectors::BandwidthRule::Scott;
  return c;
}

using DetectorState =
    std::variant<detectors::IsolationForestDetector, detectors::InneDetector, detectors::LodaDetector,
                 detectors::OneClassSvmDetector, detectors::PcaDetector, detectors::LofDetector,
                 detectors::KnnDetector, detectors::KdeDetector>;

struct DetectorModel {
  DetectorKind kind = DetectorKind::KNN;
  std::optional<detectors::Standardizer> scaler;
  DetectorState state;
  Eigen::Index n_features = 0;
};

inline DetectorState make_detector_state(const DetectorConfig& c) {
  using namespace detectors;
  switch (c.kind) {
    case DetectorKind::IsoForest: {
      IsolationForestDetector d;
      d.n_trees = c.n_trees;
      d.max_samples = c.isoforest_max_samples;
      d.seed = c.seed;
      return d;
    }
    case DetectorKind::INNE: {
      InneDetector d;
      d.n_estimators = c.inne_estimators;
      d.max_samples = c.inne_max_samples;
      d.seed = c.seed;
      return d;
    }
    case DetectorKind::LODA: {
      LodaDetector d;
      d.n_bins = c.n_bins;
      d.n_random_cuts = c.n_random_cuts;
      d.seed = c.seed;
      return d;
    }
    case DetectorKind::OCSVM: {
      OneClassSvmDetector d;
      d.nu = c.nu;
      d.gamma = c.gamma;
      d.tolerance = c.svm_tolerance;
      d.max_passes = c.svm_max_passes;
      return d;
    }
    case DetectorKind::PCA: return PcaDetector{};
    case DetectorKind::LOF5: {
      LofDetector d;
      d.k = c.n_neighbors;
      return d;
    }
    case DetectorKind::KNN: {
      KnnDetector d;
      d.k = c.n_neighbors;
      return d;
    }
    case DetectorKind::KDE: {
      KdeDetector d;
      d.bandwidth = c.bandwidth;
      d.rule = c.bandwidth_rule;
      return d;
    }
  }
  throw ConfigError("unknown detector kind");
}

inline DetectorModel fit_detector(const DetectorConfig& cfg, const Matrix& x_train) {
  if (x_train.rows() == 0) throw InsufficientData("detector needs training rows");
  DetectorModel m;
  m.kind = cfg.kind;
  m.n_features = x_train.cols();
  m.state = make_detector_state(cfg);
  if (cfg.use_scaler) m.scaler = detectors::fit_standardizer(x_train);
  const Matrix x = m.scaler ? m.scaler->apply(x_train) : x_train;
  std::visit([&x](auto& d) { d.fit(x); }, m.state);
  return m;
}

/// Higher = more anomalous.
inline Vector score_detector(const DetectorModel& m, const Matrix& x_test) {
  if (x_test.cols() != m.n_features) {
    throw ShapeError("detector fitted on " + std::to_string(m.n_features) + " features, got " + std::to_string(x_test.cols()));
  }
  const Matrix x = m.scaler ? m.scaler->apply(x_test) : x_test;
  return std::visit([&x](const auto& d) { return Vector(d.score(x)); }, m.state);
}

}  // namespace envshift
