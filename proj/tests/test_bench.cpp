#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "envshift/bench.hpp"
#include "oracles.hpp"

using namespace envshift;

namespace {

const std::vector<double> kErmColumn = {63.1, 67.7, 63.8, 67.5, 40.4, 61.0, 75.7, 65.1};
const std::vector<double> kEaMocoColumn = {70.9, 77.0, 71.1, 71.4, 67.7, 60.9, 77.0, 77.8};

std::map<DetectorKind, double> column(const std::vector<double>& percent) {
  std::map<DetectorKind, double> c;
  for (std::size_t i = 0; i < percent.size(); ++i) c[kAllDetectors[i]] = percent[i] / 100.0;
  return c;
}

BenchmarkReport report_from_columns(const std::map<PretrainerKind, std::vector<double>>& cols) {
  BenchmarkReport r;
  r.seeds = {0};
  for (DetectorKind d : kAllDetectors) r.detectors.push_back(d);
  for (const auto& [p, values] : cols) {
    r.pretrainers.push_back(p);
    for (std::size_t i = 0; i < values.size(); ++i) r.grid[{p, kAllDetectors[i]}] = {values[i] / 100.0};
  }
  return r;
}

BenchmarkSettings fast_settings() {
  BenchmarkSettings s;
  s.scenario.n_train_envs = 3;
  s.scenario.n_test_envs = 2;
  s.scenario.samples_per_env = 60;
  s.train.epochs = 2;
  s.autoencoder.epochs = 2;
  s.contrastive.epochs = 2;
  s.encoder.hidden = {16};
  s.encoder.d_emb = 8;
  return s;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(RocAuc, PerfectRanking) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
}

TEST(RocAuc, AllTiedIsHalf) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1, 0, 0}), 0.5);
}

TEST(RocAuc, ThreeOfFourPairs) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.8, 0.7, 0.3, 0.1}, std::vector<int>{1, 0, 1, 0}), 0.75);
}

TEST(RocAuc, Errors) {
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), OneClassOnly);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), OneClassOnly);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1}, std::vector<int>{0, 1}), ShapeError);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 2}), ConfigError);
}

TEST(RocAuc, MatchesPairCountingWithTies) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(RngHandle(seed, "auc"));
    const std::size_t n = 2 + rng.uniform_index(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_index(8));  // coarse grid forces ties
      y[i] = rng.uniform() < 0.4 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_NEAR(roc_auc(s, y), oracle::pair_count_auc(s, y), 1e-12) << "seed " << seed;
  }
}

TEST(RocAuc, ComplementAndMonotoneInvariance) {
  Rng rng(RngHandle(3));
  std::vector<double> s(40), neg(40), mapped(40);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    s[i] = rng.normal();
    neg[i] = -s[i];
    mapped[i] = std::exp(3.0 * s[i]) + 2.0;
    y[i] = i % 3 == 0;
  }
  EXPECT_NEAR(roc_auc(s, y) + roc_auc(neg, y), 1.0, 1e-12);
  EXPECT_EQ(roc_auc(s, y), roc_auc(mapped, y));
}

TEST(MeanAd, TableColumns) {
  EXPECT_EQ(bench_detail::fmt1(mean_ad(column(kErmColumn))), "63.0");
  EXPECT_EQ(bench_detail::fmt1(mean_ad(column(kEaMocoColumn))), "71.7");
}

TEST(MeanAd, ConstantColumn) {
  EXPECT_DOUBLE_EQ(mean_ad(column(std::vector<double>(8, 42.0))), 0.42);
}

TEST(MeanAd, MissingDetector) {
  auto c = column(kErmColumn);
  c.erase(DetectorKind::KDE);
  EXPECT_THROW(mean_ad(c), MissingDetector);
}

TEST(Render, TableFixtureMarkdown) {
  const BenchmarkReport r =
      report_from_columns({{PretrainerKind::ERM, kErmColumn}, {PretrainerKind::EAMoCo, kEaMocoColumn}});
  const auto lines = lines_of(render_table(r, ReportFormat::Markdown));
  ASSERT_EQ(lines.size(), 11u);
  EXPECT_EQ(lines[0], "| Detector | ERM | EA-MoCo |");
  EXPECT_EQ(lines[2], "| IsoForest | 63.1 | **70.9** |");
  EXPECT_EQ(lines[7], "| LOF5 | **61.0** | 60.9 |");
  EXPECT_EQ(lines[10], "| **Mean AD** | 63.0 | **71.7** |");
}

TEST(Render, ColumnsFollowTableGrouping) {
  std::map<PretrainerKind, std::vector<double>> cols;
  for (PretrainerKind p : {PretrainerKind::MoCo, PretrainerKind::Random, PretrainerKind::LISA, PretrainerKind::ERM})
    cols[p] = kErmColumn;
  const auto lines = lines_of(render_table(report_from_columns(cols), ReportFormat::Csv));
  EXPECT_EQ(lines[0], "detector,Random,ERM,LISA,MoCo");
}

TEST(Render, TiesAreAllBold) {
  const BenchmarkReport r = report_from_columns({{PretrainerKind::ERM, kErmColumn}, {PretrainerKind::IRM, kErmColumn}});
  const auto lines = lines_of(render_table(r, ReportFormat::Markdown));
  EXPECT_EQ(lines[2], "| IsoForest | **63.1** | **63.1** |");
}

TEST(Render, SingleCellIsThreeLines) {
  BenchmarkReport r;
  r.pretrainers = {PretrainerKind::ERM};
  r.detectors = {DetectorKind::KNN};
  r.seeds = {0};
  r.grid[{PretrainerKind::ERM, DetectorKind::KNN}] = {0.5};
  const std::string md = render_table(r, ReportFormat::Markdown);
  EXPECT_EQ(lines_of(md).size(), 3u);
  EXPECT_EQ(lines_of(md)[2], "| KNN | **50.0** |");
}

TEST(Render, CsvRoundTripsNumbers) {
  const BenchmarkReport r =
      report_from_columns({{PretrainerKind::ERM, kErmColumn}, {PretrainerKind::EAMoCo, kEaMocoColumn}});
  const auto lines = lines_of(render_table(r, ReportFormat::Csv));
  ASSERT_EQ(lines.size(), 10u);
  for (std::size_t row = 0; row < 8; ++row) {
    const auto fields = split_string(lines[row + 1], ',');
    ASSERT_EQ(fields.size(), 3u);
    EXPECT_EQ(fields[0], detector_display_name(kAllDetectors[row]));
    EXPECT_DOUBLE_EQ(std::stod(fields[1]), kErmColumn[row]);
    EXPECT_DOUBLE_EQ(std::stod(fields[2]), kEaMocoColumn[row]);
  }
}

TEST(Render, MetaCsvRoundTrip) {
  BenchmarkReport r;
  r.pretrainers = {PretrainerKind::ERM, PretrainerKind::MoCo};
  r.detectors = {DetectorKind::KNN, DetectorKind::KDE};
  r.seeds = {0, 3};
  r.grid[{PretrainerKind::ERM, DetectorKind::KNN}] = {0.1, 1.0 / 3.0};
  r.grid[{PretrainerKind::ERM, DetectorKind::KDE}] = {0.2, 0.7};
  r.grid[{PretrainerKind::MoCo, DetectorKind::KNN}] = {0.9, 0.123456789012345678};
  r.grid[{PretrainerKind::MoCo, DetectorKind::KDE}] = {0.5, 0.25};
  const BenchmarkReport back = parse_meta_csv(render_meta_csv(r));
  EXPECT_EQ(back.seeds, r.seeds);
  EXPECT_EQ(back.grid, r.grid);
  EXPECT_EQ(render_meta_csv(back), render_meta_csv(r));
  EXPECT_THROW(parse_meta_csv("wrong header\n"), FormatError);
}

TEST(Benchmark, GridCardinality) {
  const BenchmarkReport r = run_benchmark(fast_settings(), {PretrainerKind::Random, PretrainerKind::ERM},
                                          {DetectorKind::KNN, DetectorKind::KDE, DetectorKind::PCA}, {0, 1});
  EXPECT_TRUE(r.complete());
  EXPECT_EQ(r.grid.size(), 6u);
  for (const auto& [cell, values] : r.grid) {
    EXPECT_EQ(values.size(), 2u);
    for (double v : values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Benchmark, RegimeWithoutAnomaliesRejected) {
  BenchmarkSettings s = fast_settings();
  s.scenario.regime = Regime::A;
  EXPECT_THROW(run_benchmark(s, {PretrainerKind::ERM}, {DetectorKind::KNN}, {0}), ConfigError);
}

TEST(Benchmark, RerunAndThreadCountGiveIdenticalReport) {
  const std::vector<PretrainerKind> ps{PretrainerKind::Random, PretrainerKind::ERM, PretrainerKind::EAMoCo};
  const std::vector<DetectorKind> ds{DetectorKind::KNN, DetectorKind::IsoForest};
  BenchmarkSettings one = fast_settings();
  const auto a = run_benchmark(one, ps, ds, {0, 1});
  const auto b = run_benchmark(one, ps, ds, {0, 1});
  BenchmarkSettings four = one;
  four.threads = 4;
  const auto c = run_benchmark(four, ps, ds, {0, 1});
  EXPECT_EQ(render_report(a, ReportFormat::Markdown), render_report(b, ReportFormat::Markdown));
  EXPECT_EQ(render_meta_csv(a), render_meta_csv(c));
  EXPECT_EQ(render_table(a, ReportFormat::Csv), render_table(c, ReportFormat::Csv));
}

TEST(Benchmark, MeanAdAggregatesSeedMeans) {
  const auto r = run_benchmark(fast_settings(), {PretrainerKind::Random}, {DetectorKind::KNN, DetectorKind::KDE}, {0, 1});
  const double expected = 0.25 * (r.grid.at({PretrainerKind::Random, DetectorKind::KNN})[0] +
                                  r.grid.at({PretrainerKind::Random, DetectorKind::KNN})[1] +
                                  r.grid.at({PretrainerKind::Random, DetectorKind::KDE})[0] +
                                  r.grid.at({PretrainerKind::Random, DetectorKind::KDE})[1]);
  EXPECT_NEAR(r.mean_ad(PretrainerKind::Random), expected, 1e-15);
}

TEST(Benchmark, SettingsFromConfig) {
  const auto s = BenchmarkSettings::from_config(
      KeyValueConfig::parse("regime = C\nepochs = 4\nae_epochs = 6\ncontrastive_epochs = 8\nd_emb = 12\n"));
  EXPECT_EQ(s.scenario.regime, Regime::C);
  EXPECT_EQ(s.train.epochs, 4);
  EXPECT_EQ(s.autoencoder.epochs, 6);
  EXPECT_EQ(s.contrastive.epochs, 8);
  EXPECT_EQ(s.encoder.d_emb, 12);
}
