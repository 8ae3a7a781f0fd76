#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <map>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "envshift/errors.hpp"
#include "envshift/rng.hpp"

namespace envshift {

/// Dense matrix, one row per sample.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Split { Train, Test };
enum class ContentLabel { Normal0, Normal1, Anomaly };
enum class Regime { A, B, C, D };

inline std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

inline std::string_view to_string(ContentLabel c) {
  switch (c) {
    case ContentLabel::Normal0: return "normal0";
    case ContentLabel::Normal1: return "normal1";
    case ContentLabel::Anomaly: return "anomaly";
  }
  return "?";
}

inline std::string_view to_string(Regime r) {
  static constexpr std::string_view names[] = {"A", "B", "C", "D"};
  return names[static_cast<int>(r)];
}

inline Regime parse_regime(std::string_view s) {
  if (s == "A") return Regime::A;
  if (s == "B") return Regime::B;
  if (s == "C") return Regime::C;
  if (s == "D") return Regime::D;
  throw ConfigError("unknown regime '" + std::string(s) + "' (expected A, B, C or D)");
}

/// Regimes whose test environments carry a Style shift.
inline bool style_shifted(Regime r) { return r == Regime::B || r == Regime::D; }
/// Regimes whose test split carries Content anomalies.
inline bool has_anomalies(Regime r) { return r == Regime::C || r == Regime::D; }

struct Sample {
  std::vector<double> features;
  int env_id = 0;
  ContentLabel content_label = ContentLabel::Normal0;
  Split split = Split::Train;
};

struct EnvDataset {
  std::vector<Sample> samples;
  int d_x = 0;
  std::set<int> train_envs;
  std::set<int> test_envs;
  // Provenance carried in the file header.
  Regime regime = Regime::D;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const {
    if (d_x <= 0) throw ConfigError("dataset d_x must be positive");
    std::map<int, std::array<int, 2>> normal_counts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      const std::string where = "sample " + std::to_string(i);
      if (static_cast<int>(s.features.size()) != d_x) throw ConfigError(where + ": feature length != d_x");
      const bool in_train = train_envs.count(s.env_id) > 0;
      const bool in_test = test_envs.count(s.env_id) > 0;
      if (!in_train && !in_test) throw ConfigError(where + ": env " + std::to_string(s.env_id) + " is not declared");
      if (s.split == Split::Train) {
        if (s.content_label == ContentLabel::Anomaly) throw ConfigError(where + ": anomaly in the train split");
        if (!in_train) throw ConfigError(where + ": train sample from a test-only env");
        ++normal_counts[s.env_id][s.content_label == ContentLabel::Normal0 ? 0 : 1];
      }
    }
    for (int e : train_envs) {
      auto it = normal_counts.find(e);
      if (it == normal_counts.end() || it->second[0] < 2 || it->second[1] < 2) {
        throw ConfigError("train env " + std::to_string(e) + " needs >= 2 samples of each normal class");
      }
    }
  }

  std::size_t count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [s](const Sample& x) { return x.split == s; }));
  }
};

/// A selection of dataset rows in their original order.
struct DatasetView {
  Matrix features;                 // rows x d_x
  std::vector<int> labels;         // 1 = anomaly, 0 = normal
  std::vector<int> envs;
  std::vector<ContentLabel> content;
  std::vector<std::size_t> rows;   // index into EnvDataset::samples
};

inline DatasetView dataset_view(const EnvDataset& ds, Split split,
                                const std::optional<std::set<int>>& envs = std::nullopt) {
  if (envs) {
    for (int e : *envs) {
      if (!ds.train_envs.count(e) && !ds.test_envs.count(e)) {
        throw ConfigError("requested env " + std::to_string(e) + " is not declared in the dataset");
      }
    }
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    if (s.split != split) continue;
    if (envs && !envs->count(s.env_id)) continue;
    rows.push_back(i);
  }
  if (rows.empty()) throw EmptySelection(std::string("no ") + std::string(to_string(split)) + " rows selected");

  DatasetView v;
  v.features.resize(static_cast<Eigen::Index>(rows.size()), ds.d_x);
  v.labels.reserve(rows.size());
  v.envs.reserve(rows.size());
  v.content.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Sample& s = ds.samples[rows[r]];
    for (int j = 0; j < ds.d_x; ++j) v.features(static_cast<Eigen::Index>(r), j) = s.features[j];
    v.labels.push_back(s.content_label == ContentLabel::Anomaly ? 1 : 0);
    v.envs.push_back(s.env_id);
    v.content.push_back(s.content_label);
  }
  v.rows = std::move(rows);
  return v;
}

/// Order-sensitive fingerprint of a matrix's exact bit pattern.
inline std::uint64_t fingerprint(const Matrix& m) {
  std::uint64_t h = fnv1a(std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Text formatting helpers shared by every on-disk format.

/// 17 significant digits; round-trips every double.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline long long parse_int(std::string_view s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw FormatError("not an unsigned integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string> split_string(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string join_ints(const std::set<int>& xs) {
  std::string out;
  for (int x : xs) {
    if (!out.empty()) out += ',';
    out += std::to_string(x);
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

// ---------------------------------------------------------------------------
// Dataset file format (text, one record per line):
//
//   envshift-dataset 1
//   d_x=<int> regime=<A|B|C|D> seed=<u64> train_envs=<i,j,..> test_envs=<i,j,..> n=<rows>
//   <env_id> <train|test> <normal0|normal1|anomaly> <f_1> ... <f_dx>
//   ...
//
// Fields are single-space separated; floats use 17 significant digits.
// Lines starting with '#' are comments and are ignored by the reader.

inline std::string serialize_dataset(const EnvDataset& ds, std::string_view comment = {}) {
  std::string out;
  out.reserve(ds.samples.size() * static_cast<std::size_t>(ds.d_x) * 24 + 256);
  if (!comment.empty()) {
    out += "# ";
    out += comment;
    out += '\n';
  }
  out += "envshift-dataset 1\n";
  out += "d_x=" + std::to_string(ds.d_x) + " regime=" + std::string(to_string(ds.regime)) +
         " seed=" + std::to_string(ds.seed) + " train_envs=" + join_ints(ds.train_envs) +
         " test_envs=" + join_ints(ds.test_envs) + " n=" + std::to_string(ds.samples.size()) + "\n";
  for (const Sample& s : ds.samples) {
    out += std::to_string(s.env_id);
    out += ' ';
    out += to_string(s.split);
    out += ' ';
    out += to_string(s.content_label);
    for (double f : s.features) {
      out += ' ';
      out += format_double(f);
    }
    out += '\n';
  }
  return out;
}

inline EnvDataset parse_dataset(std::string_view text) {
  auto parse_env_list = [](const std::string& v) {
    std::set<int> envs;
    if (v.empty()) return envs;
    for (const auto& tok : split_string(v, ',')) envs.insert(static_cast<int>(parse_int(tok)));
    return envs;
  };

  std::vector<std::string> lines;
  for (auto& line : split_string(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(std::move(line));
  }
  if (lines.size() < 2 || lines[0] != "envshift-dataset 1") throw FormatError("missing dataset magic line");

  EnvDataset ds;
  std::size_t n = 0;
  std::set<std::string> seen;
  for (const auto& field : split_string(lines[1], ' ')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError("malformed header field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string val = field.substr(eq + 1);
    seen.insert(key);
    if (key == "d_x") ds.d_x = static_cast<int>(parse_int(val));
    else if (key == "regime") ds.regime = parse_regime(val);
    else if (key == "seed") ds.seed = parse_u64(val);
    else if (key == "train_envs") ds.train_envs = parse_env_list(val);
    else if (key == "test_envs") ds.test_envs = parse_env_list(val);
    else if (key == "n") n = static_cast<std::size_t>(parse_int(val));
    else throw FormatError("unknown header field '" + key + "'");
  }
  for (const char* k : {"d_x", "regime", "seed", "train_envs", "test_envs", "n"}) {
    if (!seen.count(k)) throw FormatError(std::string("header is missing '") + k + "'");
  }
  if (lines.size() - 2 != n) {
    throw FormatError("header declares " + std::to_string(n) + " rows, file has " + std::to_string(lines.size() - 2));
  }

  ds.samples.reserve(n);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto toks = split_string(lines[i], ' ');
    if (toks.size() != static_cast<std::size_t>(ds.d_x) + 3) {
      throw FormatError("row " + std::to_string(i - 2) + " has " + std::to_string(toks.size()) + " fields");
    }
    Sample s;
    s.env_id = static_cast<int>(parse_int(toks[0]));
    if (toks[1] == "train") s.split = Split::Train;
    else if (toks[1] == "test") s.split = Split::Test;
    else throw FormatError("bad split '" + toks[1] + "'");
    if (toks[2] == "normal0") s.content_label = ContentLabel::Normal0;
    else if (toks[2] == "normal1") s.content_label = ContentLabel::Normal1;
    else if (toks[2] == "anomaly") s.content_label = ContentLabel::Anomaly;
    else throw FormatError("bad content label '" + toks[2] + "'");
    s.features.reserve(static_cast<std::size_t>(ds.d_x));
    for (std::size_t j = 3; j < toks.size(); ++j) s.features.push_back(parse_double(toks[j]));
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

inline void save_dataset(const EnvDataset& ds, const std::string& path, std::string_view comment = {}) {
  write_file(path, serialize_dataset(ds, comment));
}

inline EnvDataset load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

// Embedding / score matrices as plain whitespace-separated text.
inline std::string serialize_matrix(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ' ';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

}  // namespace envshift
