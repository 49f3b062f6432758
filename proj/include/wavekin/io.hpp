// File plumbing for the command-line front end: flat key-value config
// files with sections, versioned CSV output, a matching reader, run
// manifests and minimal SVG line plots.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavekin::io {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

/// Flat key-value configuration with [section] headers.  Keys are stored
/// as "section.key"; keys before any header live in the empty section.
class Config {
 public:
  static Config parse(std::istream& in) {
    Config cfg;
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']')
          throw ConfigError("config line " + std::to_string(line_no) +
                            ": unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": empty key");
      cfg.kv_[section.empty() ? key : section + "." + key] = value;
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse(in);
  }

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not a number: " + it->second);
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": not an integer: " + it->second);
    }
  }

  std::vector<double> get_list(const std::string& key,
                               std::vector<double> fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("config key " + key + ": bad list entry: " + item);
      }
    }
    return out;
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

/// Shortest round-trip decimal formatting so CSV output is reproducible
/// bit-for-bit across runs.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV file with a version comment and a header row.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& schema,
            const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    out_ << "# wavekin-csv v1 " << schema << "\n";
    write_strings(columns);
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_double(values[i]);
    }
    out_ << '\n';
  }

  void row_mixed(const std::vector<std::string>& values) { write_strings(values); }

 private:
  void write_strings(const std::vector<std::string>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << values[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
};

/// Numeric rows of a CSV written by CsvWriter (comments and the header
/// row are skipped; non-numeric cells in data rows are an error).
inline std::vector<std::vector<double>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool header_skipped = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(trim(cell)));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (!header_skipped) {
        header_skipped = true;
        continue;
      }
      throw std::runtime_error(path + ": non-numeric data row: " + line);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

/// Key-value run manifest, one "key = value" per line.
inline void write_manifest(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# wavekin run manifest v1\n";
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
}

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

/// Minimal SVG line plot.  With log_log set, both axes are log10-scaled
/// and non-positive samples are dropped.
inline void write_line_plot_svg(const std::string& path,
                                const std::vector<PlotSeries>& series,
                                const std::string& title, bool log_log) {
  const double W = 640, H = 480, ml = 60, mr = 20, mt = 40, mb = 40;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  std::vector<PlotSeries> drawable;
  for (const auto& s : series) {
    PlotSeries d;
    d.label = s.label;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      double x = s.x[i], y = s.y[i];
      if (log_log) {
        if (x <= 0 || y <= 0) continue;
        x = std::log10(x);
        y = std::log10(y);
      }
      d.x.push_back(x);
      d.y.push_back(y);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    drawable.push_back(std::move(d));
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\">\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr
      << "\" height=\"" << H - mt - mb
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\">" << title
      << (log_log ? " (log-log)" : "") << "</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  for (std::size_t s = 0; s < drawable.size(); ++s) {
    const auto& d = drawable[s];
    if (d.x.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << colors[s % 4]
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < d.x.size(); ++i)
      out << px(d.x[i]) << ',' << py(d.y[i]) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << W - mr - 5 << "\" y=\"" << mt + 18 * (s + 1)
        << "\" text-anchor=\"end\" fill=\"" << colors[s % 4] << "\">" << d.label
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace wavekin::io
