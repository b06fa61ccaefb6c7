#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace triplet_embed {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// Writes to a sibling temp file, then renames over the target.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Shortest representation that round-trips exactly.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
    out.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

inline double parse_real(std::string_view token, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
    throw DataError(where + ": not a number: '" + std::string(token) + "'");
  return v;
}

inline std::int64_t parse_integer(std::string_view token, const std::string& where) {
  std::int64_t v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec == std::errc::result_out_of_range)
    throw DataError(where + ": integer overflow: '" + std::string(token) + "'");
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size())
    throw DataError(where + ": not an integer: '" + std::string(token) + "'");
  return v;
}

// Tab-separated matrix with an optional header row of column ids.
struct LabeledMatrix {
  Matrix values;
  std::vector<std::int64_t> column_ids;
};

inline std::string matrix_to_tsv(const Matrix& m, const std::vector<std::int64_t>& column_ids) {
  std::string out;
  if (!column_ids.empty()) {
    for (std::size_t c = 0; c < column_ids.size(); ++c) {
      if (c) out += '\t';
      out += std::to_string(column_ids[c]);
    }
    out += '\n';
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += '\t';
      out += format_real(m(r, c));
    }
    out += '\n';
  }
  return out;
}

inline LabeledMatrix read_tsv_matrix(const fs::path& path, bool has_header) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  LabeledMatrix out;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (header_pending) {
      for (const auto f : fields) out.column_ids.push_back(parse_integer(f, where));
      header_pending = false;
      continue;
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto f : fields) row.push_back(parse_real(f, where));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(where + ": ragged row");
    rows.push_back(std::move(row));
  }
  // A header-only file is a matrix with zero columns kept; rows absent means 0 x k.
  const std::size_t cols = rows.empty() ? out.column_ids.size() : rows.front().size();
  if (has_header && out.column_ids.size() != cols)
    throw DataError(path.string() + ": header has " + std::to_string(out.column_ids.size()) +
                    " ids but rows have " + std::to_string(cols) + " columns");
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out.values(r, c) = rows[r][c];
  return out;
}

}  // namespace triplet_embed
