#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "envshift/core.hpp"
#include "envshift/detectors.hpp"
#include "envshift/eamoco.hpp"
#include "envshift/pretrain.hpp"
#include "envshift/synthgen.hpp"

namespace envshift {

/// Mann-Whitney ROC-AUC with midranks for tied scores.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw ConfigError("roc_auc: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(y);
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw OneClassOnly("roc_auc needs both positive and negative labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]] == 1) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

inline double roc_auc(const Vector& scores, const std::vector<int>& labels) {
  return roc_auc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), std::span<const int>(labels));
}

/// Arithmetic mean over exactly one value per detector kind.
inline double mean_ad(const std::map<DetectorKind, double>& column) {
  double sum = 0.0;
  for (DetectorKind k : kAllDetectors) {
    auto it = column.find(k);
    if (it == column.end()) throw MissingDetector(std::string("no value for ") + std::string(detector_display_name(k)));
    sum += it->second;
  }
  if (column.size() != std::size(kAllDetectors)) throw MissingDetector("column has entries beyond the eight detectors");
  return sum / static_cast<double>(std::size(kAllDetectors));
}

/// Everything a benchmark run needs besides the grid axes.
struct BenchmarkSettings {
  ScenarioConfig scenario;
  nn::TrainConfig train;
  nn::TrainConfig autoencoder;
  PenaltyConfig penalty;
  ContrastiveConfig contrastive;
  EncoderSpec encoder;
  KeyValueConfig detector_overrides;
  int threads = 1;

  static BenchmarkSettings from_config(const KeyValueConfig& kv) {
    BenchmarkSettings s;
    s.scenario = ScenarioConfig::from_config(kv);
    s.train = nn::TrainConfig::from_config(kv);
    nn::TrainConfig ae;
    ae.epochs = kv.get("ae_epochs", ae.epochs);
    ae.batch_size = kv.get("ae_batch_size", ae.batch_size);
    ae.lr = kv.get("ae_lr", ae.lr);
    ae.validate();
    s.autoencoder = ae;
    s.penalty = PenaltyConfig::from_config(kv);
    s.contrastive = ContrastiveConfig::from_config(kv);
    s.encoder.d_emb = kv.get("d_emb", s.encoder.d_emb);
    s.detector_overrides = kv;
    return s;
  }
};

inline nn::MlpParams run_pretrainer(PretrainerKind kind, const EnvDataset& ds, const BenchmarkSettings& s,
                                    std::uint64_t seed) {
  nn::TrainConfig train = s.train;
  train.seed = seed;
  ContrastiveConfig con = s.contrastive;
  con.seed = seed;
  switch (kind) {
    case PretrainerKind::Random: return random_encoder(ds.d_x, s.encoder.d_emb, seed, s.encoder);
    case PretrainerKind::ERM: return train_erm(ds, train, s.encoder).encoder;
    case PretrainerKind::IRM: return train_irm(ds, train, s.penalty, s.encoder).encoder;
    case PretrainerKind::Fish: return train_fish(ds, train, s.penalty, s.encoder).encoder;
    case PretrainerKind::LISA: return train_lisa(ds, train, s.penalty, s.encoder).encoder;
    case PretrainerKind::MoCo: return train_moco_baseline(ds, con, s.encoder).encoder;
    case PretrainerKind::EAMoCo: {
      nn::TrainConfig ae = s.autoencoder;
      ae.seed = seed;
      return train_ea_moco(ds, con, ae, s.encoder).pretrain.encoder;
    }
  }
  throw ConfigError("unknown pretrainer");
}

struct BenchmarkReport {
  std::uint64_t scenario_fingerprint = 0;
  std::string scenario_text;
  std::vector<PretrainerKind> pretrainers;
  std::vector<DetectorKind> detectors;
  std::vector<std::uint64_t> seeds;
  // (pretrainer, detector) -> ROC-AUC per seed, in `seeds` order; NaN marks a failed cell.
  std::map<std::pair<PretrainerKind, DetectorKind>, std::vector<double>> grid;
  std::vector<std::string> detector_configs;
  std::vector<std::string> failures;
  int threads = 1;
  std::map<std::pair<PretrainerKind, std::uint64_t>, double> wall_seconds;

  bool complete() const { return failures.empty(); }

  double cell_mean(PretrainerKind p, DetectorKind d) const {
    const auto& v = grid.at({p, d});
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }

  double cell_std(PretrainerKind p, DetectorKind d) const {
    const auto& v = grid.at({p, d});
    if (v.size() < 2) return 0.0;
    const double m = cell_mean(p, d);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  }

  /// Mean over the report's detectors of the per-cell seed means.
  double mean_ad(PretrainerKind p) const {
    double s = 0.0;
    for (DetectorKind d : detectors) s += cell_mean(p, d);
    return s / static_cast<double>(detectors.size());
  }

  /// Mean over the report's detectors for one seed.
  double mean_ad(PretrainerKind p, std::size_t seed_index) const {
    double s = 0.0;
    for (DetectorKind d : detectors) s += grid.at({p, d})[seed_index];
    return s / static_cast<double>(detectors.size());
  }
};

namespace bench_detail {

/// Runs `count` tasks on up to `threads` workers. Each task writes only its
/// own output slot, so the result is independent of scheduling.
template <class F>
void parallel_for(std::size_t count, int threads, F&& task) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace bench_detail

/// Progress callback: (pretrainer, seed, seconds).
using BenchmarkProgress = std::function<void(PretrainerKind, std::uint64_t, double)>;

/// For each seed: generate the dataset once, run every pretrainer on its train
/// split, embed train and test rows, fit every detector on the train
/// embeddings and score the test embeddings against the anomaly labels.
inline BenchmarkReport run_benchmark(const BenchmarkSettings& settings, const std::vector<PretrainerKind>& pretrainers,
                                     const std::vector<DetectorKind>& detectors, const std::vector<std::uint64_t>& seeds,
                                     const BenchmarkProgress& progress = {}) {
  if (!has_anomalies(settings.scenario.regime)) {
    throw ConfigError("benchmark needs regime C or D (regime " + std::string(to_string(settings.scenario.regime)) +
                      " has no anomalies in the test split)");
  }
  if (pretrainers.empty() || detectors.empty() || seeds.empty()) throw ConfigError("benchmark grid has an empty axis");
  settings.scenario.validate();

  BenchmarkReport report;
  report.scenario_fingerprint = settings.scenario.fingerprint();
  {
    ScenarioConfig c = settings.scenario;
    c.seed = 0;
    report.scenario_text = c.canonical();
  }
  report.pretrainers = pretrainers;
  report.detectors = detectors;
  report.seeds = seeds;
  report.threads = settings.threads;
  for (DetectorKind d : detectors) report.detector_configs.push_back(detector_config_from(settings.detector_overrides, d, 0).describe());
  for (auto p : pretrainers)
    for (auto d : detectors) report.grid[{p, d}] = std::vector<double>(seeds.size(), std::nan(""));

  std::vector<std::optional<EnvDataset>> datasets(seeds.size());
  std::vector<std::string> dataset_errors(seeds.size());
  bench_detail::parallel_for(seeds.size(), settings.threads, [&](std::size_t s) {
    ScenarioConfig cfg = settings.scenario;
    cfg.seed = seeds[s];
    try {
      datasets[s] = generate_scenario(cfg);
    } catch (const std::exception& e) {
      dataset_errors[s] = e.what();
    }
  });

  const std::size_t n_tasks = seeds.size() * pretrainers.size();
  std::vector<std::vector<double>> results(n_tasks);
  std::vector<std::vector<std::string>> errors(n_tasks);
  std::vector<double> seconds(n_tasks, 0.0);
  std::mutex progress_mutex;
  bench_detail::parallel_for(n_tasks, settings.threads, [&](std::size_t t) {
    const std::size_t s = t / pretrainers.size();
    const PretrainerKind p = pretrainers[t % pretrainers.size()];
    const std::uint64_t seed = seeds[s];
    const std::string ctx = "pretrainer=" + std::string(pretrainer_id(p)) + " seed=" + std::to_string(seed);
    results[t].assign(detectors.size(), std::nan(""));
    if (!datasets[s]) {
      errors[t].push_back(ctx + ": dataset generation failed: " + dataset_errors[s]);
      return;
    }
    const auto start = std::chrono::steady_clock::now();
    const EnvDataset& ds = *datasets[s];
    Matrix train_emb, test_emb;
    std::vector<int> test_labels;
    try {
      const nn::MlpParams enc = run_pretrainer(p, ds, settings, seed);
      train_emb = nn::encode(enc, dataset_view(ds, Split::Train).features);
      DatasetView test = dataset_view(ds, Split::Test);
      test_emb = nn::encode(enc, test.features);
      test_labels = std::move(test.labels);
    } catch (const std::exception& e) {
      errors[t].push_back(ctx + ": " + e.what());
      return;
    }
    for (std::size_t d = 0; d < detectors.size(); ++d) {
      try {
        const DetectorConfig dc = detector_config_from(settings.detector_overrides, detectors[d], seed);
        const DetectorModel m = fit_detector(dc, train_emb);
        results[t][d] = roc_auc(score_detector(m, test_emb), test_labels);
      } catch (const std::exception& e) {
        errors[t].push_back(ctx + " detector=" + std::string(detector_id(detectors[d])) + ": " + e.what());
      }
    }
    seconds[t] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(p, seed, seconds[t]);
    }
  });

  for (std::size_t t = 0; t < n_tasks; ++t) {
    const std::size_t s = t / pretrainers.size();
    const PretrainerKind p = pretrainers[t % pretrainers.size()];
    for (std::size_t d = 0; d < detectors.size(); ++d) report.grid[{p, detectors[d]}][s] = results[t][d];
    report.failures.insert(report.failures.end(), errors[t].begin(), errors[t].end());
    report.wall_seconds[{p, seeds[s]}] = seconds[t];
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { Markdown, Csv };

namespace bench_detail {

inline std::string fmt1(double auc) {
  if (!std::isfinite(auc)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * auc);
  return buf;
}

inline std::vector<PretrainerKind> ordered_columns(const BenchmarkReport& r) {
  std::vector<PretrainerKind> cols;
  for (PretrainerKind k : kPretrainerTableOrder) {
    if (std::find(r.pretrainers.begin(), r.pretrainers.end(), k) != r.pretrainers.end()) cols.push_back(k);
  }
  return cols;
}

inline std::vector<DetectorKind> ordered_rows(const BenchmarkReport& r) {
  std::vector<DetectorKind> rows;
  for (DetectorKind k : kAllDetectors) {
    if (std::find(r.detectors.begin(), r.detectors.end(), k) != r.detectors.end()) rows.push_back(k);
  }
  return rows;
}

/// Row cells as rendered, with every cell equal to the row maximum in bold.
inline std::vector<std::string> bold_max(const std::vector<std::string>& cells) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : cells)
    if (c != "n/a") best = std::max(best, std::stod(c));
  std::vector<std::string> out;
  for (const auto& c : cells) out.push_back(c != "n/a" && std::stod(c) == best ? "**" + c + "**" : c);
  return out;
}

}  // namespace bench_detail

/// The AUC table only: detectors as rows, pretrainers as columns, a mean row
/// last when more than one detector is present. Values are x100, 1 decimal.
inline std::string render_table(const BenchmarkReport& r, ReportFormat format) {
  using namespace bench_detail;
  const auto cols = ordered_columns(r);
  const auto rows = ordered_rows(r);
  std::vector<std::pair<std::string, std::vector<std::string>>> body;
  for (DetectorKind d : rows) {
    std::vector<std::string> cells;
    for (PretrainerKind p : cols) cells.push_back(fmt1(r.cell_mean(p, d)));
    body.emplace_back(std::string(detector_display_name(d)), std::move(cells));
  }
  if (rows.size() > 1) {
    std::vector<std::string> cells;
    for (PretrainerKind p : cols) cells.push_back(fmt1(r.mean_ad(p)));
    body.emplace_back("Mean AD", std::move(cells));
  }

  std::string out;
  if (format == ReportFormat::Csv) {
    out += "detector";
    for (PretrainerKind p : cols) out += "," + std::string(pretrainer_display_name(p));
    out += "\n";
    for (const auto& [name, cells] : body) {
      out += name;
      for (const auto& c : cells) out += "," + (c == "n/a" ? std::string() : c);
      out += "\n";
    }
    return out;
  }
  out += "| Detector |";
  for (PretrainerKind p : cols) out += " " + std::string(pretrainer_display_name(p)) + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) out += "---:|";
  out += "\n";
  for (const auto& [name, cells] : body) {
    out += "| " + (name == "Mean AD" ? "**" + name + "**" : name) + " |";
    for (const auto& c : bold_max(cells)) out += " " + c + " |";
    out += "\n";
  }
  return out;
}

inline std::string render_report(const BenchmarkReport& r, ReportFormat format) {
  if (format == ReportFormat::Csv) return render_table(r, format);
  using namespace bench_detail;
  char fp[17];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(r.scenario_fingerprint));
  std::string out = "# ROC-AUC x100, mean over seeds\n\n";
  out += "- scenario: `" + std::string(fp) + "`";
  for (const auto& line : split_string(r.scenario_text, '\n')) {
    if (!line.empty() && line.rfind("seed=", 0) != 0) out += " " + line;
  }
  out += "\n- seeds:";
  for (auto s : r.seeds) out += " " + std::to_string(s);
  out += "\n- threads: " + std::to_string(r.threads) + "\n";
  out += "- columns: None = Random; Supervised = ERM, Fish, IRM, LISA; Unsupervised = EA-MoCo, MoCo\n";
  for (const auto& c : r.detector_configs) out += "- detector " + c + "\n";
  if (!r.failures.empty()) {
    out += "- PARTIAL REPORT, failed cells:\n";
    for (const auto& f : r.failures) out += "  - " + f + "\n";
  }
  out += "\n" + render_table(r, ReportFormat::Markdown);
  return out;
}

/// Per-seed values plus per-cell mean and std, full precision.
inline std::string render_meta_csv(const BenchmarkReport& r) {
  std::string out = "pretrainer,detector,seed,roc_auc\n";
  for (PretrainerKind p : bench_detail::ordered_columns(r)) {
    for (DetectorKind d : bench_detail::ordered_rows(r)) {
      const auto& v = r.grid.at({p, d});
      const std::string prefix = std::string(pretrainer_id(p)) + "," + std::string(detector_id(d)) + ",";
      for (std::size_t s = 0; s < r.seeds.size(); ++s) out += prefix + std::to_string(r.seeds[s]) + "," + format_double(v[s]) + "\n";
      out += prefix + "mean," + format_double(r.cell_mean(p, d)) + "\n";
      out += prefix + "std," + format_double(r.cell_std(p, d)) + "\n";
    }
  }
  return out;
}

/// Rebuilds the grid from report_meta.csv (summary rows are recomputed).
inline BenchmarkReport parse_meta_csv(std::string_view text) {
  BenchmarkReport r;
  std::map<std::pair<PretrainerKind, DetectorKind>, std::map<std::uint64_t, double>> cells;
  std::set<std::uint64_t> seeds;
  bool header = true;
  for (const auto& line : split_string(text, '\n')) {
    if (line.empty()) continue;
    if (header) {
      if (line != "pretrainer,detector,seed,roc_auc") throw FormatError("unexpected meta header");
      header = false;
      continue;
    }
    const auto t = split_string(line, ',');
    if (t.size() != 4) throw FormatError("meta row needs 4 fields: " + line);
    if (t[2] == "mean" || t[2] == "std") continue;
    const auto p = parse_pretrainer(t[0]);
    const auto d = parse_detector(t[1]);
    const auto s = parse_u64(t[2]);
    cells[{p, d}][s] = t[3] == "nan" ? std::nan("") : parse_double(t[3]);
    seeds.insert(s);
    if (std::find(r.pretrainers.begin(), r.pretrainers.end(), p) == r.pretrainers.end()) r.pretrainers.push_back(p);
    if (std::find(r.detectors.begin(), r.detectors.end(), d) == r.detectors.end()) r.detectors.push_back(d);
  }
  r.seeds.assign(seeds.begin(), seeds.end());
  for (auto p : r.pretrainers) {
    for (auto d : r.detectors) {
      auto& dst = r.grid[{p, d}];
      for (auto s : r.seeds) {
        auto it = cells[{p, d}].find(s);
        if (it == cells[{p, d}].end()) throw FormatError("meta is missing a cell value");
        dst.push_back(it->second);
      }
    }
  }
  return r;
}

}  // namespace envshift
