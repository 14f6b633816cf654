#pragma once

// Tabular (CSV) and matrix (JSON) output. Every file starts with metadata:
// tool version, seed and a hash of the normalized configuration.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "twocurve/error.hpp"
#include "twocurve/linalg.hpp"

namespace twocurve {

inline constexpr const char* kToolName = "twocurve";
inline constexpr const char* kToolVersion = "0.1.0";

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [end, ec] = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, end);
  return std::string(16 - s.size(), '0') + s;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_number(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline double parse_number_field(const std::string& s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) throw config_error("not a number: '" + s + "'");
  return v;
}

using Metadata = std::vector<std::pair<std::string, std::string>>;

inline Metadata base_metadata(std::uint64_t seed, const nlohmann::json& config) {
  const std::string dump = config.dump();
  return {{"tool", std::string(kToolName) + " " + kToolVersion},
          {"seed", std::to_string(seed)},
          {"config_hash", hex64(fnv1a64(dump))},
          {"config", dump}};
}

struct Table {
  Metadata metadata;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) throw numerical_error("table row width does not match header");
    rows.push_back(std::move(row));
  }

  std::string meta(const std::string& key) const {
    for (const auto& [k, v] : metadata)
      if (k == key) return v;
    return {};
  }

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw config_error("no column '" + name + "'");
  }
};

namespace detail {

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace detail

/// Metadata lines are "# key: value"; then the header row and the data rows.
inline std::string to_csv(const Table& t) {
  std::ostringstream os;
  for (const auto& [k, v] : t.metadata) os << "# " << k << ": " << v << "\n";
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << detail::csv_quote(t.header[i]);
  os << "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << detail::csv_quote(r[i]);
    os << "\n";
  }
  return os.str();
}

inline Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!have_header && line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ", 2);
      if (colon == std::string::npos) throw config_error("malformed metadata line: " + line);
      t.metadata.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
    } else if (!have_header) {
      t.header = detail::csv_split(line);
      have_header = true;
    } else if (!line.empty()) {
      auto row = detail::csv_split(line);
      if (row.size() != t.header.size()) throw config_error("CSV row width does not match header");
      t.rows.push_back(std::move(row));
    }
  }
  if (!have_header) throw config_error("CSV has no header row");
  return t;
}

inline nlohmann::json matrix_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline Mat matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw config_error("expected a nonempty array of rows");
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j[0].size()) throw config_error("ragged matrix");
    for (std::size_t k = 0; k < j[i].size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
  }
  return m;
}

inline nlohmann::json with_metadata(const Metadata& meta, nlohmann::json body) {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [k, v] : meta) m[k] = k == "config" ? nlohmann::json::parse(v) : nlohmann::json(v);
  body["metadata"] = m;
  return body;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot write '" + path + "'");
  out << content;
  if (!out) throw config_error("failed writing '" + path + "'");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace twocurve
