#pragma once
// CSV files: comma separated, '.' decimal point, header row required.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "sampler.hpp"

namespace archimax {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] int column(std::string_view name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return static_cast<int>(c);
    return -1;
  }
};

namespace detail {
inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = line.find(',', start);
    out.emplace_back(trim(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}
}  // namespace detail

inline CsvTable parse_csv(std::istream& in, const std::string& source = "input") {
  CsvTable t;
  std::string line;
  bool have_header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw ValidationError("malformed_csv", source + " line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                                 " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ValidationError("malformed_csv", source + " has no header row");
  return t;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("file_not_found", "cannot open '" + path + "'");
  return parse_csv(in, path);
}

inline double parse_number(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != end)
    throw ValidationError("invalid_value", "not a number at " + where + ": '" + std::string(s) + "'");
  return v;
}

// Numeric matrix from the given columns (all columns when empty).
inline Matrix numeric_columns(const CsvTable& t, const std::vector<int>& cols, const std::string& source = "input") {
  std::vector<int> use = cols;
  if (use.empty())
    for (std::size_t c = 0; c < t.header.size(); ++c) use.push_back(static_cast<int>(c));
  Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(use.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t j = 0; j < use.size(); ++j)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          parse_number(t.rows[r][use[j]], source + " row " + std::to_string(r + 1) + " column '" + t.header[use[j]] + "'");
  return m;
}

// Shortest representation that reads back to the same double.
inline std::string format_number(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& out, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << r[c];
    out << '\n';
  }
}

inline void write_matrix_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& m) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw ValidationError("dimension_mismatch", "header length differs from column count");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_number(m(r, c));
    out << '\n';
  }
}

inline std::vector<std::string> default_header(int d, const std::string& prefix = "V") {
  std::vector<std::string> h;
  for (int i = 1; i <= d; ++i) h.push_back(prefix + std::to_string(i));
  return h;
}

}  // namespace archimax
