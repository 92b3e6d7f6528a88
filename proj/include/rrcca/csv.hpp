#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "rrcca/errors.hpp"
#include "rrcca/matrix_kernels.hpp"

namespace rrcca {

/// Shortest decimal form that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw InvalidInputError("csv: cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

/// Raw matrix CSV: one row per line, comma separated, no header.
inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 12);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for writing: " + path.string());
  f << content;
  if (!f) throw Error("write failed: " + path.string());
}

inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  write_text_file(path, matrix_to_csv(m));
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string_view line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = pos + 1;
  }
  return lines;
}

}  // namespace detail

inline Matrix matrix_from_csv(const std::string& text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty()) throw InvalidInputError("csv: empty matrix");
  const auto first = detail::split_fields(lines[0]);
  const Eigen::Index cols = static_cast<Eigen::Index>(first.size());
  Matrix m(static_cast<Eigen::Index>(lines.size()), cols);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = detail::split_fields(lines[i]);
    if (static_cast<Eigen::Index>(fields.size()) != cols) {
      throw InvalidInputError("csv: ragged row " + std::to_string(i + 1));
    }
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(static_cast<Eigen::Index>(i), j) = parse_double(fields[static_cast<std::size_t>(j)]);
    }
  }
  return m;
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  return matrix_from_csv(read_text_file(path));
}

/// Edge lists use a header "src,dst" and 1-based node indices on disk.
inline std::string edges_to_csv(const std::vector<std::pair<int, int>>& edges) {
  std::string out = "src,dst\n";
  for (const auto& [a, b] : edges) {
    out += std::to_string(a + 1);
    out += ',';
    out += std::to_string(b + 1);
    out += '\n';
  }
  return out;
}

inline std::vector<std::pair<int, int>> edges_from_csv(const std::string& text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || detail::split_fields(lines[0]) !=
                           std::vector<std::string_view>{"src", "dst"}) {
    throw InvalidInputError("edge csv: expected header 'src,dst'");
  }
  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = detail::split_fields(lines[i]);
    if (fields.size() != 2) throw InvalidInputError("edge csv: bad row " + std::to_string(i + 1));
    int a = 0, b = 0;
    auto ra = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), a);
    auto rb = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), b);
    if (ra.ec != std::errc{} || rb.ec != std::errc{}) {
      throw InvalidInputError("edge csv: bad indices in row " + std::to_string(i + 1));
    }
    edges.emplace_back(a - 1, b - 1);  // file is 1-based
  }
  return edges;
}

inline void write_edges_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<int, int>>& edges) {
  write_text_file(path, edges_to_csv(edges));
}

inline std::vector<std::pair<int, int>> read_edges_csv(const std::filesystem::path& path) {
  return edges_from_csv(read_text_file(path));
}

}  // namespace rrcca
