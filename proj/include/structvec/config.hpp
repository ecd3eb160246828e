#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace structvec {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what)
      : std::runtime_error("config: " + what) {}
};

// Line-oriented `key = value` file with [section] headers and # comments.
// Keys are stored flat as "section.key"; flags override file values.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse_text(const std::string& text) {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']') {
          throw ConfigError("line " + std::to_string(lineno) +
                            ": unterminated section header");
        }
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      const std::size_t eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(lineno) +
                          ": expected key = value");
      }
      std::string key = strip(s.substr(0, eq));
      std::string value = strip(s.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      }
      cfg.values_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key " + key);
    return it->second;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw ConfigError("key " + key + " is not an integer: " + it->second);
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (...) {
      throw ConfigError("key " + key + " is not an integer: " + it->second);
    }
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw ConfigError("key " + key + " is not a number: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") {
      return true;
    }
    if (it->second == "false" || it->second == "0" || it->second == "no") {
      return false;
    }
    throw ConfigError("key " + key + " is not a boolean: " + it->second);
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted canonical rendering, the input to the config hash.
  std::string canonical_text() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      out += k;
      out += " = ";
      out += v;
      out += "\n";
    }
    return out;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : canonical_text()) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  static std::string strip(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  std::map<std::string, std::string> values_;
};

inline constexpr const char* kToolVersion = "0.1.0";

// Every command writes one of these next to its outputs; with the config and
// seed it pins everything needed to regenerate the artifacts byte-for-byte.
inline void write_manifest(const std::string& path, const std::string& command,
                           const KvConfig& cfg, std::uint64_t seed,
                           const std::vector<std::string>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = cfg.hash();
  j["versions"] = {{"tool", kToolVersion}, {"checkpoint_format", "SSRL1"}};
  j["config"] = cfg.values();
  j["outputs"] = outputs;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write manifest " + path);
  out << j.dump(2) << "\n";
}

}  // namespace structvec
