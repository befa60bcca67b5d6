#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gibbsgof/errors.hpp"
#include "gibbsgof/geometry.hpp"

namespace gibbsgof::io {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

inline double parse_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    fail(ErrorKind::Config, what + ": '" + text + "' is not a number");
  }
  return v;
}

inline long long parse_int(const std::string& text, const std::string& what) {
  long long v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    fail(ErrorKind::Config, what + ": '" + text + "' is not an integer");
  }
  return v;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// Reads a point pattern with header `x,y[,z][,mark]`. Mark labels are looked
/// up in `marks`; without a mark column every point gets the first mark.
template <std::size_t Dim>
Configuration<Dim> read_points_csv(std::istream& in, const MarkSet& marks, const std::string& source = "input") {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Io, source + ": empty file, expected a header line");
  const auto header = split(line, ',');
  static constexpr const char* axes[] = {"x", "y", "z"};
  if (header.size() < Dim || header.size() > Dim + 1) {
    fail(ErrorKind::Io, source + ": header must list " + std::to_string(Dim) + " coordinates and an optional mark");
  }
  for (std::size_t k = 0; k < Dim; ++k) {
    if (header[k] != axes[k]) fail(ErrorKind::Io, source + ": unexpected header column '" + header[k] + "'");
  }
  const bool has_mark = header.size() == Dim + 1;
  if (has_mark && header[Dim] != "mark") fail(ErrorKind::Io, source + ": last column must be 'mark'");

  std::vector<MarkedPoint<Dim>> pts;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cols = split(line, ',');
    const std::string where = source + ":" + std::to_string(lineno);
    if (cols.size() != header.size()) fail(ErrorKind::Io, where + ": wrong number of columns");
    MarkedPoint<Dim> p;
    for (std::size_t k = 0; k < Dim; ++k) {
      try {
        p.position[k] = parse_double(cols[k], where);
      } catch (const Error& e) {
        fail(ErrorKind::Io, e.what());
      }
    }
    if (has_mark) {
      const auto m = marks.index_of(cols[Dim]);
      if (!m) fail(ErrorKind::InvalidMark, where + ": unknown mark '" + cols[Dim] + "'");
      p.mark = *m;
    }
    pts.push_back(p);
  }
  return Configuration<Dim>(std::move(pts));
}

template <std::size_t Dim>
Configuration<Dim> read_points_csv(const std::string& path, const MarkSet& marks) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return read_points_csv<Dim>(in, marks, path);
}

template <std::size_t Dim>
void write_points_csv(std::ostream& out, const Configuration<Dim>& phi, const MarkSet& marks) {
  static constexpr const char* axes[] = {"x", "y", "z"};
  for (std::size_t k = 0; k < Dim; ++k) out << (k ? "," : "") << axes[k];
  out << ",mark\n";
  for (const auto& p : phi) {
    for (std::size_t k = 0; k < Dim; ++k) out << (k ? "," : "") << format_double(p.position[k]);
    out << ',' << marks.label(p.mark) << '\n';
  }
}

template <std::size_t Dim>
void write_points_csv(const std::string& path, const Configuration<Dim>& phi, const MarkSet& marks) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  write_points_csv(out, phi, marks);
}

/// Flat `key = value` configuration with dotted keys and `#` comments.
/// Keys are checked against a schema when one is supplied.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& in, const std::string& source = "config") {
    KeyValueConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      const std::string where = source + ":" + std::to_string(lineno);
      if (eq == std::string::npos) fail(ErrorKind::Config, where + ": expected 'key = value'");
      const std::string key = trim(std::string_view(line).substr(0, eq));
      const std::string value = trim(std::string_view(line).substr(eq + 1));
      if (key.empty()) fail(ErrorKind::Config, where + ": empty key");
      if (cfg.values_.count(key)) fail(ErrorKind::Config, where + ": duplicate key '" + key + "'");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open config '" + path + "'");
    return parse(in, path);
  }

  void validate(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
      if (!allowed.count(k)) fail(ErrorKind::Config, "unknown config key '" + k + "'");
    }
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::Config, "missing config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    return has(key) ? parse_double(values_.at(key), key) : fallback;
  }

  double require_double(const std::string& key) const { return parse_double(require_string(key), key); }

  long long get_int(const std::string& key, long long fallback) const {
    return has(key) ? parse_int(values_.at(key), key) : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = values_.at(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorKind::Config, key + ": '" + v + "' is not a boolean");
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    for (const auto& item : split(values_.at(key), ',')) out.push_back(parse_double(item, key));
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gibbsgof::io
