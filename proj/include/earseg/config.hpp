#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace earseg {

// Plain-text key=value run configuration. '#' starts a comment, blank lines
// are ignored, keys may not repeat. Command-line flags override file values;
// the effective result is echoed into every output directory.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config '" + path + "'");
    KeyValueConfig cfg;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error(path + ": line " + std::to_string(line_number) +
                                 ": expected key=value, got '" + trimmed + "'");
      }
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) {
        throw std::runtime_error(path + ": line " + std::to_string(line_number) + ": empty key");
      }
      if (!cfg.values_.emplace(key, value).second) {
        throw std::runtime_error(path + ": line " + std::to_string(line_number) +
                                 ": duplicate key '" + key + "'");
      }
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_number<double>(key, it->second);
  }

  long get_long(const std::string& key, long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_number<long>(key, it->second);
  }

  unsigned long long get_u64(const std::string& key, unsigned long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_number<unsigned long long>(key, it->second);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config key '" + key + "': '" + v + "' is not a boolean");
  }

  // Rejects any key outside the allowed vocabulary, listing the offenders.
  void require_known_keys(const std::set<std::string>& allowed) const {
    std::vector<std::string> unknown;
    for (const auto& [k, v] : values_) {
      if (allowed.find(k) == allowed.end()) unknown.push_back(k);
    }
    if (!unknown.empty()) {
      std::string msg = "unknown config key(s):";
      for (const auto& k : unknown) msg += " '" + k + "'";
      throw std::runtime_error(msg);
    }
  }

  // Deterministic serialization for the config_used.txt echo.
  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
    return os.str();
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto b = std::find_if_not(s.begin(), s.end(), is_space);
    auto e = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
    return b < e ? std::string(b, e) : std::string();
  }

  template <typename T>
  static T parse_number(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    T v{};
    is >> v;
    if (is.fail() || !is.eof()) {
      throw std::runtime_error("config key '" + key + "': '" + value + "' is not a valid number");
    }
    return v;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace earseg
