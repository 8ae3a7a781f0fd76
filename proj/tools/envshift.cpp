// envshift: command-line driver for dataset generation, pretraining,
// embedding, detector scoring and the benchmark grid.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "envshift/bench.hpp"
#include "envshift/config.hpp"
#include "envshift/core.hpp"
#include "envshift/detectors.hpp"
#include "envshift/eamoco.hpp"
#include "envshift/pretrain.hpp"
#include "envshift/synthgen.hpp"

namespace fs = std::filesystem;
using namespace envshift;

namespace {

constexpr const char* kToolVersion = "0.3.0";

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Content hash in the style of a git blob id: the length-prefixed bytes.
std::uint64_t blob_hash(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + std::string(1, '\0');
  return fnv1a(bytes, fnv1a(header));
}

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<std::uint64_t> seeds;
  std::uint64_t input_hash = fnv1a("");  // data files read; the config is listed in full

  std::string text() const {
    std::string out = "# envshift run manifest\n";
    out += "manifest.command = " + command + "\n";
    out += "manifest.version = " + std::string(kToolVersion) + "\n";
    out += "manifest.inputs = " + hex16(input_hash) + "\n";
    out += "manifest.seeds =";
    for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : " ") + std::to_string(seeds[i]);
    out += "\n";
    for (const auto& [k, v] : config) out += k + " = " + v + "\n";
    return out;
  }

  std::string hash() const { return hex16(fnv1a(text())); }
};

struct Context {
  std::string workdir = ".";
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  std::string path(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(workdir) / p).string();
  }

  /// Config file keys (manifest bookkeeping keys dropped) with --set on top.
  KeyValueConfig config() const {
    KeyValueConfig kv;
    if (!config_path.empty()) {
      const KeyValueConfig file = KeyValueConfig::load(path(config_path));
      for (const auto& [k, v] : file.values()) {
        if (k.rfind("manifest.", 0) != 0) kv.set(k, v);
      }
    }
    for (const auto& o : overrides) kv.apply_override(o);
    return kv;
  }

  /// --seed, then the config's `seed` key, then ENVSHIFT_SEED, then 0.
  std::uint64_t resolve_seed(const KeyValueConfig& kv) const {
    if (seed) return *seed;
    if (kv.has("seed")) return kv.get_required<std::uint64_t>("seed");
    if (const char* env = std::getenv("ENVSHIFT_SEED"); env && *env) return parse_u64(env);
    return 0;
  }
};

void ensure_parent(const std::string& file) {
  const fs::path parent = fs::path(file).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string write_manifest(const RunManifest& m, const std::string& path) {
  ensure_parent(path);
  write_file(path, m.text());
  return m.hash();
}

void write_output(const std::string& path, std::string_view contents) {
  ensure_parent(path);
  write_file(path, contents);
}

std::map<std::string, std::string> resolved(const KeyValueConfig& kv) {
  std::map<std::string, std::string> out = kv.values();
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& tok : split_string(text, ',')) {
    const std::string t = trim(tok);
    if (!t.empty()) seeds.push_back(parse_u64(t));
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

// ---------------------------------------------------------------------------

int cmd_gen(const Context& ctx, const std::string& out_rel) {
  KeyValueConfig kv = ctx.config();
  kv.require("regime");
  const std::uint64_t seed = ctx.resolve_seed(kv);
  kv.set("seed", std::to_string(seed));
  const ScenarioConfig cfg = ScenarioConfig::from_config(kv);
  for (const auto& line : split_string(cfg.canonical(), '\n')) {
    if (const auto eq = line.find('='); eq != std::string::npos) kv.set(line.substr(0, eq), line.substr(eq + 1));
  }

  const std::string out = ctx.path(out_rel);
  RunManifest m{"gen", resolved(kv), {seed}, blob_hash("")};
  const std::string hash = write_manifest(m, out + ".manifest");
  const EnvDataset ds = generate_scenario(cfg);
  write_output(out, serialize_dataset(ds, "manifest " + hash));
  std::cerr << "wrote " << out << " (" << ds.samples.size() << " rows)\n";
  return 0;
}

std::string checkpoint_name(PretrainerKind kind, std::string_view dataset_bytes, std::uint64_t seed) {
  return std::string(pretrainer_id(kind)) + "-" + hex16(blob_hash(dataset_bytes)) + "-" + std::to_string(seed) + ".model";
}

int cmd_pretrain(const Context& ctx, const std::string& pretrainer, const std::string& dataset_rel, std::string out_rel) {
  KeyValueConfig kv = ctx.config();
  const PretrainerKind kind = parse_pretrainer(pretrainer);
  const std::uint64_t seed = ctx.resolve_seed(kv);
  kv.set("seed", std::to_string(seed));
  kv.set("pretrainer", std::string(pretrainer_id(kind)));
  const std::string dataset_path = ctx.path(dataset_rel);
  const std::string bytes = read_file(dataset_path);
  if (out_rel.empty()) out_rel = checkpoint_name(kind, bytes, seed);
  const std::string out = ctx.path(out_rel);

  RunManifest m{"pretrain", resolved(kv), {seed}, blob_hash(bytes)};
  write_manifest(m, out + ".manifest");
  const BenchmarkSettings settings = BenchmarkSettings::from_config(kv);
  const EnvDataset ds = parse_dataset(bytes);
  const nn::MlpParams enc = run_pretrainer(kind, ds, settings, seed);
  write_output(out, nn::serialize_mlp(enc));
  std::cerr << "wrote " << out << "\n";
  return 0;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("split must be 'train' or 'test', got '" + s + "'");
}

int cmd_embed(const Context& ctx, const std::string& model_rel, const std::string& dataset_rel, const std::string& split,
              const std::string& out_rel) {
  const KeyValueConfig kv = ctx.config();
  const std::string model_bytes = read_file(ctx.path(model_rel));
  const std::string data_bytes = read_file(ctx.path(dataset_rel));
  const std::string out = ctx.path(out_rel);
  std::map<std::string, std::string> cfg = resolved(kv);
  cfg["split"] = split;
  RunManifest m{"embed", cfg, {}, fnv1a(data_bytes, blob_hash(model_bytes))};
  write_manifest(m, out + ".manifest");
  const nn::MlpParams enc = nn::parse_mlp(model_bytes);
  const EnvDataset ds = parse_dataset(data_bytes);
  write_output(out, serialize_matrix(nn::encode(enc, dataset_view(ds, parse_split(split)).features)));
  return 0;
}

int cmd_score(const Context& ctx, const std::string& model_rel, const std::string& dataset_rel, const std::string& detector,
              const std::string& split_name, bool allow_train, const std::string& out_rel) {
  const Split split = parse_split(split_name);
  if (split == Split::Train && !allow_train) {
    throw ConfigError("refusing to score the train split (detectors are fit on it); pass --allow-train to override");
  }
  KeyValueConfig kv = ctx.config();
  const DetectorKind kind = parse_detector(detector);
  const std::uint64_t seed = ctx.resolve_seed(kv);
  const DetectorConfig dcfg = detector_config_from(kv, kind, seed);
  const std::string model_bytes = read_file(ctx.path(model_rel));
  const std::string data_bytes = read_file(ctx.path(dataset_rel));
  const std::string out = ctx.path(out_rel);

  std::map<std::string, std::string> cfg = resolved(kv);
  cfg["detector"] = dcfg.describe();
  cfg["split"] = split_name;
  RunManifest m{"score", cfg, {seed}, fnv1a(data_bytes, blob_hash(model_bytes))};
  write_manifest(m, out + ".manifest");

  const nn::MlpParams enc = nn::parse_mlp(model_bytes);
  const EnvDataset ds = parse_dataset(data_bytes);
  const DetectorModel model = fit_detector(dcfg, nn::encode(enc, dataset_view(ds, Split::Train).features));
  const Vector scores = score_detector(model, nn::encode(enc, dataset_view(ds, split).features));
  std::string text;
  for (Eigen::Index i = 0; i < scores.size(); ++i) text += format_double(scores(i)) + "\n";
  write_output(out, text);
  return 0;
}

template <class T, class Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  for (const auto& tok : split_string(text, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    const T v = parse(t);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

int cmd_bench(const Context& ctx, const std::string& out_dir_rel, const std::string& pretrainers_arg,
              const std::string& detectors_arg, const std::string& seeds_arg, int threads) {
  KeyValueConfig kv = ctx.config();
  std::vector<PretrainerKind> pretrainers(std::begin(kPretrainerTableOrder), std::end(kPretrainerTableOrder));
  std::vector<DetectorKind> detectors(std::begin(kAllDetectors), std::end(kAllDetectors));
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  const auto pick = [&kv](const std::string& flag, const char* key) {
    return !flag.empty() ? flag : kv.has(key) ? kv.require(key) : std::string();
  };
  if (auto s = pick(pretrainers_arg, "pretrainers"); !s.empty()) pretrainers = parse_list<PretrainerKind>(s, parse_pretrainer);
  if (auto s = pick(detectors_arg, "detectors"); !s.empty()) detectors = parse_list<DetectorKind>(s, parse_detector);
  if (auto s = pick(seeds_arg, "seeds"); !s.empty()) seeds = parse_seed_list(s);
  if (threads < 1) throw ConfigError("--threads must be >= 1");

  BenchmarkSettings settings = BenchmarkSettings::from_config(kv);
  settings.threads = threads;

  const fs::path out_dir = ctx.path(out_dir_rel);
  fs::create_directories(out_dir);
  std::map<std::string, std::string> cfg = resolved(kv);
  for (const auto& line : split_string(settings.scenario.canonical(), '\n')) {
    if (const auto eq = line.find('='); eq != std::string::npos && line.rfind("seed=", 0) != 0) {
      cfg[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  std::string names;
  for (auto p : pretrainers) names += (names.empty() ? "" : ",") + std::string(pretrainer_id(p));
  cfg["pretrainers"] = names;
  names.clear();
  for (auto d : detectors) names += (names.empty() ? "" : ",") + std::string(detector_id(d));
  cfg["detectors"] = names;
  names.clear();
  for (auto s : seeds) names += (names.empty() ? "" : ",") + std::to_string(s);
  cfg["seeds"] = names;
  cfg["threads"] = std::to_string(threads);
  RunManifest m{"bench", cfg, seeds, blob_hash("")};
  const std::string hash = write_manifest(m, (out_dir / "manifest.txt").string());

  const BenchmarkReport report = run_benchmark(settings, pretrainers, detectors, seeds,
                                               [](PretrainerKind p, std::uint64_t seed, double secs) {
                                                 std::fprintf(stderr, "  %-8s seed %llu  %.2fs\n", std::string(pretrainer_id(p)).c_str(),
                                                              static_cast<unsigned long long>(seed), secs);
                                               });
  write_file((out_dir / "report.md").string(), "<!-- manifest " + hash + " -->\n" + render_report(report, ReportFormat::Markdown));
  write_file((out_dir / "report.csv").string(), render_report(report, ReportFormat::Csv));
  write_file((out_dir / "report_meta.csv").string(), render_meta_csv(report));
  double total = 0.0;
  for (const auto& [key, secs] : report.wall_seconds) total += secs;
  std::fprintf(stderr, "wrote %s (task time %.1fs)\n", out_dir.string().c_str(), total);
  if (!report.complete()) {
    for (const auto& f : report.failures) std::cerr << "failed: " << f << "\n";
    return 3;
  }
  return 0;
}

int cmd_report(const Context& ctx, const std::string& meta_rel, const std::string& format, const std::string& out_rel) {
  ReportFormat fmt;
  if (format == "markdown" || format == "md") fmt = ReportFormat::Markdown;
  else if (format == "csv") fmt = ReportFormat::Csv;
  else throw ConfigError("format must be 'markdown' or 'csv', got '" + format + "'");
  const BenchmarkReport r = parse_meta_csv(read_file(ctx.path(meta_rel)));
  const std::string text = render_table(r, fmt);
  if (out_rel.empty()) std::cout << text;
  else write_output(ctx.path(out_rel), text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"envshift: environment-aware anomaly detection benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Context ctx;
  std::uint64_t seed_value = 0;
  app.add_option("--workdir", ctx.workdir, "Directory that relative paths resolve against");
  app.add_option("--config", ctx.config_path, "key = value config file");
  app.add_option("--set", ctx.overrides, "Override a config key (key=value), repeatable");
  auto* seed_opt = app.add_option("--seed", seed_value, "Seed (falls back to the config, then ENVSHIFT_SEED)");
  for (auto* opt : app.get_options()) opt->configurable(false);
  app.fallthrough();

  std::string out, dataset, model, pretrainer, detector, split = "test", meta, format = "markdown";
  std::string pretrainers_arg, detectors_arg, seeds_arg, out_dir = "bench-out";
  bool allow_train = false;
  int threads = 1;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic multi-env dataset");
  gen->add_option("--out", out, "Dataset path")->required();

  auto* pre = app.add_subcommand("pretrain", "Train an encoder on the train split");
  pre->add_option("--pretrainer", pretrainer, "random, erm, fish, irm, lisa, eamoco, moco")->required();
  pre->add_option("--dataset", dataset, "Dataset path")->required();
  pre->add_option("--out", out, "Checkpoint path (default <pretrainer>-<data hash>-<seed>.model)");

  auto* emb = app.add_subcommand("embed", "Write encoder embeddings of one split");
  emb->add_option("--model", model)->required();
  emb->add_option("--dataset", dataset)->required();
  emb->add_option("--split", split, "train or test");
  emb->add_option("--out", out)->required();

  auto* sc = app.add_subcommand("score", "Fit a detector on train embeddings and score a split");
  sc->add_option("--model", model)->required();
  sc->add_option("--dataset", dataset)->required();
  sc->add_option("--detector", detector)->required();
  sc->add_option("--split", split, "test (default) or train");
  sc->add_flag("--allow-train", allow_train, "Permit scoring the split the detector was fit on");
  sc->add_option("--out", out)->required();

  auto* bench = app.add_subcommand("bench", "Run the pretrainer x detector x seed grid");
  bench->add_option("--out-dir", out_dir, "Directory for report.md, report.csv, report_meta.csv");
  bench->add_option("--pretrainers", pretrainers_arg, "Comma-separated pretrainer names");
  bench->add_option("--detectors", detectors_arg, "Comma-separated detector names");
  bench->add_option("--seeds", seeds_arg, "Comma-separated seeds (default 0,1,2,3,4)");
  bench->add_option("--threads", threads, "Worker threads");

  auto* rep = app.add_subcommand("report", "Render a table from report_meta.csv");
  rep->add_option("--meta", meta)->required();
  rep->add_option("--format", format, "markdown or csv");
  rep->add_option("--out", out, "Output path (default stdout)");

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count() > 0) ctx.seed = seed_value;

  try {
    if (*gen) return cmd_gen(ctx, out);
    if (*pre) return cmd_pretrain(ctx, pretrainer, dataset, out);
    if (*emb) return cmd_embed(ctx, model, dataset, split, out);
    if (*sc) return cmd_score(ctx, model, dataset, detector, split, allow_train, out);
    if (*bench) return cmd_bench(ctx, out_dir, pretrainers_arg, detectors_arg, seeds_arg, threads);
    if (*rep) return cmd_report(ctx, meta, format, out);
  } catch (const std::exception& e) {
    std::cerr << "envshift: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
