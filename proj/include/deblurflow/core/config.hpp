#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deblurflow/core/error.hpp"
#include "deblurflow/core/rng.hpp"

namespace deblurflow {

/// Flat `key = value` configuration grouped by `[section]` headers.
///
/// Keys are addressed as `section.key`. Values are kept as text and parsed on
/// access, so a config written by `serialize()` reloads bit-identically.
/// Precedence when assembling a run: defaults < file < overrides.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw InvalidArgument("config line " + std::to_string(lineno) + ": bad section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key");
      cfg.set(section.empty() ? key : section + "." + key, trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw NotFound("config file not found: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

  void save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw InvalidArgument("cannot write config: " + path);
    f << serialize();
  }

  std::string serialize() const {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [k, v] : values_) {
      const auto dot = k.find('.');
      if (dot == std::string::npos) sections[""].emplace_back(k, v);
      else sections[k.substr(0, dot)].emplace_back(k.substr(dot + 1), v);
    }
    std::ostringstream out;
    for (const auto& [name, entries] : sections) {
      if (!name.empty()) out << "[" << name << "]\n";
      for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
      out << "\n";
    }
    return out.str();
  }

  std::uint64_t hash() const { return fnv1a64(serialize()); }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  /// Applies `key=value` strings; later entries win.
  void apply_overrides(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) throw InvalidArgument("override must be key=value: " + o);
      set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
  }

  /// Copies every key of `other` into this config (other wins).
  void merge(const Config& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
  }

  std::string get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }
  std::string get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw InvalidArgument("missing config key: " + key);
    return it->second;
  }
  double get_double(const std::string& key, double def) const {
    return has(key) ? to_double(key, get_string(key)) : def;
  }
  long get_int(const std::string& key, long def) const {
    return has(key) ? to_int(key, get_string(key)) : def;
  }
  bool get_bool(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InvalidArgument("config key " + key + ": not a boolean: " + v);
  }
  std::vector<double> get_doubles(const std::string& key, std::vector<double> def) const {
    if (!has(key)) return def;
    std::vector<double> out;
    for (const auto& part : split(get_string(key), ',')) out.push_back(to_double(key, part));
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
      cur = trim(cur);
      if (!cur.empty()) out.push_back(cur);
    }
    return out;
  }

 private:
  static double to_double(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw InvalidArgument("config key " + key + ": not a number: " + v);
    }
  }
  static long to_int(const std::string& key, const std::string& v) {
    try {
      size_t pos = 0;
      long d = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw InvalidArgument("config key " + key + ": not an integer: " + v);
    }
  }

  std::map<std::string, std::string> values_;
};

// Doubles are written with round-trip precision.
inline std::string format_double(double v) {
  std::ostringstream o;
  o.precision(17);
  o << v;
  return o.str();
}

/// Short form for names and labels ("0.7", not "0.69999999999999996").
inline std::string label_double(double v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

}  // namespace deblurflow
