// Acceptance driver: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "envshift/bench.hpp"
#include "envshift/detectors.hpp"
#include "envshift/eamoco.hpp"
#include "envshift/nn/losses.hpp"
#include "envshift/pretrain.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace envshift;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

int hardware_threads() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

// -- 1, 2: the full regime D grid ------------------------------------------

BenchmarkReport regime_d_grid() {
  BenchmarkSettings s;
  s.threads = hardware_threads();
  const std::vector<PretrainerKind> ps(std::begin(kPretrainerTableOrder), std::end(kPretrainerTableOrder));
  const std::vector<DetectorKind> ds(std::begin(kAllDetectors), std::end(kAllDetectors));
  return run_benchmark(s, ps, ds, {0, 1, 2, 3, 4});
}

void check_headline(const BenchmarkReport& r, double seconds) {
  std::vector<double> diffs;
  for (std::size_t s = 0; s < r.seeds.size(); ++s)
    diffs.push_back(r.mean_ad(PretrainerKind::EAMoCo, s) - r.mean_ad(PretrainerKind::ERM, s));
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean = 100.0 * mean / static_cast<double>(diffs.size());
  const double ea = 100.0 * r.mean_ad(PretrainerKind::EAMoCo);
  const double erm = 100.0 * r.mean_ad(PretrainerKind::ERM);
  report(1, r.complete() && mean >= 2.0 && seconds < 900.0,
         fmt("EA-MoCo %.2f vs ERM %.2f, paired mean diff %.2f", ea, erm, mean) + fmt(" (grid %.0fs)", seconds));
}

void check_supervised_penalties(const BenchmarkReport& r) {
  const double erm = r.mean_ad(PretrainerKind::ERM);
  int at_least = 0;
  std::string detail = fmt("ERM %.2f", 100.0 * erm);
  for (PretrainerKind p : {PretrainerKind::IRM, PretrainerKind::Fish, PretrainerKind::LISA}) {
    const double v = r.mean_ad(p);
    at_least += v >= erm;
    detail += ", " + std::string(pretrainer_display_name(p)) + fmt(" %.2f", 100.0 * v);
  }
  report(2, at_least >= 2, detail + ", " + std::to_string(at_least) + " of 3 >= ERM");
}

// -- 3: gap grows from C to D ----------------------------------------------

void check_gap(const BenchmarkReport& d_report) {
  BenchmarkSettings s;
  s.threads = hardware_threads();
  s.scenario.regime = Regime::C;
  const std::vector<DetectorKind> ds(std::begin(kAllDetectors), std::end(kAllDetectors));
  const BenchmarkReport c = run_benchmark(s, {PretrainerKind::ERM, PretrainerKind::EAMoCo}, ds, {0, 1, 2, 3, 4});
  const double gap_c = 100.0 * (c.mean_ad(PretrainerKind::EAMoCo) - c.mean_ad(PretrainerKind::ERM));
  const double gap_d = 100.0 * (d_report.mean_ad(PretrainerKind::EAMoCo) - d_report.mean_ad(PretrainerKind::ERM));
  report(3, c.complete() && gap_d - gap_c > 0.0, fmt("gap C %.2f, gap D %.2f, difference %.2f", gap_c, gap_d, gap_d - gap_c));
}

// -- 4: table fixtures ------------------------------------------------------

void check_fixtures() {
  const std::vector<double> erm = {63.1, 67.7, 63.8, 67.5, 40.4, 61.0, 75.7, 65.1};
  const std::vector<double> ea = {70.9, 77.0, 71.1, 71.4, 67.7, 60.9, 77.0, 77.8};
  BenchmarkReport r;
  r.seeds = {0};
  r.pretrainers = {PretrainerKind::ERM, PretrainerKind::EAMoCo};
  r.detectors.assign(std::begin(kAllDetectors), std::end(kAllDetectors));
  std::map<DetectorKind, double> c_erm, c_ea;
  for (std::size_t i = 0; i < 8; ++i) {
    const DetectorKind d = kAllDetectors[i];
    r.grid[{PretrainerKind::ERM, d}] = {erm[i] / 100.0};
    r.grid[{PretrainerKind::EAMoCo, d}] = {ea[i] / 100.0};
    c_erm[d] = erm[i] / 100.0;
    c_ea[d] = ea[i] / 100.0;
  }
  const std::string a = bench_detail::fmt1(mean_ad(c_erm));
  const std::string b = bench_detail::fmt1(mean_ad(c_ea));
  const std::string md = render_table(r, ReportFormat::Markdown);
  const bool rendered = md.find("| **Mean AD** | 63.0 | **71.7** |") != std::string::npos &&
                        md.find("| LOF5 | **61.0** | 60.9 |") != std::string::npos;
  report(4, a == "63.0" && b == "71.7" && rendered, "ERM " + a + ", EA-MoCo " + b + (rendered ? ", table ok" : ", table mismatch"));
}

// -- 5: ROC-AUC vs pair counting -------------------------------------------

void check_roc() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(RngHandle(seed, "acceptance-auc"));
    const std::size_t n = 2 + rng.uniform_index(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_index(6));
      y[i] = rng.uniform() < 0.5;
    }
    y[0] = 1;
    y[1] = 0;
    worst = std::max(worst, std::abs(roc_auc(s, y) - oracle::pair_count_auc(s, y)));
  }
  report(5, worst <= 1e-12, fmt("max |auc - oracle| = %.3g over 200 instances", worst));
}

// -- 6: detector oracles and orientation ------------------------------------

double max_diff(const Vector& a, const std::vector<double>& b) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a(i) - b[static_cast<std::size_t>(i)]));
  return m;
}

void check_detectors() {
  double worst = 0.0;
  const auto plain = [](DetectorKind k) {
    DetectorConfig c = default_detector_config(k, 0);
    c.use_scaler = false;
    return c;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(RngHandle(seed, "acceptance-det"));
    const Matrix train = random_matrix(rng, 20, 4);
    const Matrix test = 2.0 * random_matrix(rng, 10, 4);
    worst = std::max(worst, max_diff(score_detector(fit_detector(plain(DetectorKind::KNN), train), test), oracle::knn(train, test, 5)));
    worst = std::max(worst, max_diff(score_detector(fit_detector(plain(DetectorKind::LOF5), train), test), oracle::lof(train, test, 5)));
    worst = std::max(worst, max_diff(score_detector(fit_detector(plain(DetectorKind::KDE), train), test), oracle::kde(train, test, 1.0)));
    worst = std::max(worst, max_diff(score_detector(fit_detector(plain(DetectorKind::PCA), train), test), oracle::mahalanobis(train, test)));
  }
  Rng rng(RngHandle(1, "acceptance-radius"));
  const Matrix train = random_matrix(rng, 200, 8);
  Matrix probe = Matrix::Zero(2, 8);
  probe.row(1) = 10.0 * random_matrix(rng, 1, 8).row(0).normalized();
  int oriented = 0;
  for (DetectorKind k : kAllDetectors) {
    const Vector s = score_detector(fit_detector(default_detector_config(k, 2), train), probe);
    oriented += s(1) > s(0);
  }
  report(6, worst <= 1e-9 && oriented == 8,
         fmt("oracle max diff %.3g, %.0f of 8 detectors rank the far point higher", worst, oriented));
}

// -- 7: gradient checks -----------------------------------------------------

Vector flatten(nn::MlpParams p) {
  std::vector<double> v;
  p.for_each_scalar([&v](double& x) { v.push_back(x); });
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nn::MlpParams unflatten(nn::MlpParams shape, const Vector& v) {
  Eigen::Index i = 0;
  shape.for_each_scalar([&](double& x) { x = v(i++); });
  return shape;
}

double loss_fd(nn::LossKind kind, int draws) {
  double worst = 0.0;
  for (int d = 0; d < draws; ++d) {
    const RngHandle h(static_cast<std::uint64_t>(d), "acceptance-fd");
    Rng rng(h.split("data"));
    const nn::MlpParams p = nn::init_mlp({4, 6, 3}, {nn::Activation::ReLU, nn::Activation::Identity}, h.split("init"));
    nn::Batch b;
    b.inputs = random_matrix(rng, 5, 4);
    b.targets = random_matrix(rng, 5, 3);
    if (kind == nn::LossKind::BCE) b.targets = (b.targets.array() > 0.0).cast<double>().matrix();
    const Vector analytic = flatten(nn::loss_and_grad(p, b, kind).grads);
    const Vector numeric = oracle::central_difference(
        [&](const Vector& v) { return nn::loss_and_grad(unflatten(p, v), b, kind).loss; }, flatten(p), 1e-5);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return worst;
}

double info_nce_fd(int draws) {
  double worst = 0.0;
  const int d = 4;
  for (int draw = 0; draw < draws; ++draw) {
    Rng rng(RngHandle(static_cast<std::uint64_t>(draw), "acceptance-nce"));
    const Matrix m = random_matrix(rng, d, 6);
    const auto split = [&](const Vector& v, int lo, int hi) {
      std::vector<Vector> out;
      for (int k = lo; k < hi; ++k) out.push_back(v.segment(k * d, d));
      return out;
    };
    const Vector all = Eigen::Map<const Vector>(m.data(), m.size());
    const auto f = [&](const Vector& v) { return info_nce(v.head(d), split(v, 1, 3), split(v, 3, 6), 0.5).loss; };
    const InfoNceResult r = info_nce(all.head(d), split(all, 1, 3), split(all, 3, 6), 0.5);
    Vector analytic(d * 6);
    analytic << r.grad_q, r.grad_positives[0], r.grad_positives[1], r.grad_negatives[0], r.grad_negatives[1],
        r.grad_negatives[2];
    worst = std::max(worst, oracle::relative_error(analytic, oracle::central_difference(f, all)));
  }
  return worst;
}

double irm_fd(int draws) {
  double worst = 0.0;
  for (int draw = 0; draw < draws; ++draw) {
    Rng rng(RngHandle(static_cast<std::uint64_t>(draw), "acceptance-irm"));
    Matrix z(6, 1), y(6, 1);
    for (int i = 0; i < 6; ++i) {
      z(i, 0) = 2.0 * rng.normal();
      y(i, 0) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    const Vector analytic = irm_penalty(z, y).grad_output.col(0);
    const Vector numeric =
        oracle::central_difference([&](const Vector& v) { return irm_penalty(Matrix(v), y).value; }, z.col(0), 1e-6);
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  }
  return worst;
}

void check_gradients() {
  const double bce = loss_fd(nn::LossKind::BCE, 20);
  const double mse = loss_fd(nn::LossKind::MSE, 20);
  const double nce = info_nce_fd(20);
  const double irm = irm_fd(20);
  const double worst = std::max({bce, mse, nce, irm});
  report(7, worst < 1e-4, fmt("max rel err BCE %.2g, MSE %.2g, InfoNCE %.2g", bce, mse, nce) + fmt(", IRM %.2g", irm));
}

// -- 8: positive selection and env-label dependence --------------------------

void check_positive_pairs() {
  Rng data(RngHandle(8, "acceptance-table"));
  const Matrix e = random_matrix(data, 80, 5);
  std::vector<int> env;
  for (int i = 0; i < 80; ++i) env.push_back(static_cast<int>(data.uniform_index(4)));
  const DistanceTable dt = build_distance_table(e, env);
  double table_err = 0.0;
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    table_err = std::max(table_err, std::abs(dt.dist(i, i)));
    for (Eigen::Index j = 0; j < e.rows(); ++j) {
      table_err = std::max(table_err, std::abs(dt.dist(i, j) - dt.dist(j, i)));
      table_err = std::max(table_err, std::abs(dt.dist(i, j) - oracle::dist(e, i, e, j)));
    }
  }
  int same_env = 0;
  Rng rng(RngHandle(9, "acceptance-select"));
  for (int t = 0; t < 10000; ++t) {
    const std::size_t a = rng.uniform_index(80);
    same_env += dt.env[select_positive(a, dt, rng)] == dt.env[a];
  }

  ScenarioConfig sc;
  sc.n_train_envs = 3;
  sc.n_test_envs = 1;
  sc.samples_per_env = 40;
  const EnvDataset ds = generate_scenario(sc);
  EnvDataset relabeled = ds;
  std::vector<int> envs;
  for (const Sample& s : ds.samples) envs.push_back(s.env_id);
  Rng(RngHandle(6)).shuffle(envs);
  for (std::size_t i = 0; i < envs.size(); ++i) relabeled.samples[i].env_id = envs[i];
  ContrastiveConfig cc;
  cc.epochs = 2;
  cc.batch_size = 16;
  EncoderSpec spec;
  spec.hidden = {8};
  spec.d_emb = 4;
  const auto moco_a = train_moco_baseline(ds, cc, spec);
  const auto moco_b = train_moco_baseline(relabeled, cc, spec);
  const bool moco_same = nn::serialize_mlp(moco_a.encoder) == nn::serialize_mlp(moco_b.encoder);
  const DatasetView v = dataset_view(ds, Split::Train);
  std::vector<int> permuted = v.envs;
  Rng(RngHandle(5)).shuffle(permuted);
  const auto ea_a = train_ea_moco_on_table(v.features, build_distance_table(v.features, v.envs), cc, spec);
  const auto ea_b = train_ea_moco_on_table(v.features, build_distance_table(v.features, permuted), cc, spec);
  const bool ea_changed = ea_a.encoder.max_abs_diff(ea_b.encoder) > 0.0;

  report(8, same_env == 0 && table_err <= 1e-12 && moco_same && ea_changed,
         fmt("same-env positives %.0f/10000, table err %.2g", same_env, table_err) +
             (moco_same ? ", MoCo invariant" : ", MoCo CHANGED") + (ea_changed ? ", EA-MoCo changes" : ", EA-MoCo UNCHANGED"));
}

// -- 9: CLI output independent of thread count -------------------------------

void check_threads() {
  const fs::path dir = fs::temp_directory_path() / "envshift-acceptance-threads";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_file((dir / "grid.cfg").string(),
             "regime = D\nn_train_envs = 4\nn_test_envs = 2\nsamples_per_env = 80\nepochs = 5\nae_epochs = 5\n"
             "contrastive_epochs = 5\n");
  const auto run = [&](int threads) {
    const std::string out = "t" + std::to_string(threads);
    const std::string cmd = std::string(ENVSHIFT_CLI_PATH) + " --workdir " + dir.string() +
                            " --config grid.cfg bench --out-dir " + out + " --threads " + std::to_string(threads) +
                            " --seeds 0,1 2>/dev/null";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) && WEXITSTATUS(raw) == 0 ? read_file((dir / out / "report.csv").string()) : std::string();
  };
  const int n = std::max(4, hardware_threads());
  const std::string one = run(1);
  const std::string many = run(n);
  report(9, !one.empty() && one == many,
         "report.csv --threads 1 vs --threads " + std::to_string(n) + (one == many ? ": identical" : ": differ"));
  fs::remove_all(dir);
}

}  // namespace

int main() {
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const BenchmarkReport d = regime_d_grid();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    check_headline(d, secs);
    check_supervised_penalties(d);
    check_gap(d);
  } catch (const std::exception& e) {
    std::printf("grid error: %s\n", e.what());
    for (int id : {1, 2, 3}) report(id, false, "grid did not complete");
  }
  const std::vector<std::pair<int, std::function<void()>>> rest = {
      {4, check_fixtures}, {5, check_roc}, {6, check_detectors}, {7, check_gradients}, {8, check_positive_pairs}, {9, check_threads}};
  for (const auto& [id, fn] : rest) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, false, std::string("threw: ") + e.what());
    }
  }
  std::printf("%s\n", failures == 0 ? "all criteria PASS" : (std::to_string(failures) + " criteria FAIL").c_str());
  return failures == 0 ? 0 : 1;
}
