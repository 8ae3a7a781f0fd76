#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "envshift/core.hpp"

namespace envshift {

/// Flat `key = value` configuration with `#` comments. Keeps track of which
/// keys were read so that typos surface as errors instead of being ignored.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    int lineno = 0;
    for (const auto& raw : split_string(text, '\n')) {
      ++lineno;
      std::string line = raw;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      }
      std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) { return parse(read_file(path)); }

  /// Applies a `key=value` override (command-line flags win over file keys).
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
    used_.insert(key);
    return it->second;
  }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return convert<T>(key, require(key));
  }

  template <class T>
  T get_required(const std::string& key) const {
    return convert<T>(key, require(key));
  }

  /// Keys present in the file that no reader asked for.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Canonical text form: sorted keys, one per line.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  template <class T>
  static T convert(const std::string& key, const std::string& v) {
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        return v;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw FormatError("not a boolean: '" + v + "'");
      } else if constexpr (std::is_floating_point_v<T>) {
        return static_cast<T>(parse_double(v));
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        return parse_u64(v);
      } else {
        return static_cast<T>(parse_int(v));
      }
    } catch (const FormatError& e) {
      throw ConfigError("key '" + key + "': " + e.what());
    }
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace envshift
