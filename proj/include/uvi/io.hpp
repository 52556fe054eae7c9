#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uvi/errors.hpp"
#include "uvi/var.hpp"

namespace uvi {
namespace io {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Columnar path file: header "t,x1,...,xd", one row per observation,
// 17 significant digits so load(save(path)) is bit-identical.
inline void save_path(const VarPath& path, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw IoError("save_path: cannot open " + file);
  const int d = path.d();
  os << "t";
  for (int j = 1; j <= d; ++j) os << ",x" << j;
  os << "\n";
  for (int t = 0; t < path.n(); ++t) {
    os << (t + 1);
    for (int j = 0; j < d; ++j) os << "," << format_double(path.data(t, j));
    os << "\n";
  }
  if (!os) throw IoError("save_path: write failed for " + file);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& file) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') throw IoError("malformed number '" + s + "' in " + file);
  return v;
}

inline VarPath load_path(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw IoError("load_path: cannot open " + file);
  std::string line;
  if (!std::getline(is, line)) throw IoError("load_path: empty file " + file);
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "t") {
    throw IoError("load_path: bad header in " + file);
  }
  const int d = static_cast<int>(header.size()) - 1;
  for (int j = 0; j < d; ++j) {
    if (header[static_cast<std::size_t>(j) + 1] != "x" + std::to_string(j + 1)) {
      throw IoError("load_path: bad header in " + file);
    }
  }
  std::vector<std::vector<double>> rows;
  int t_expect = 1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != d + 1) {
      throw IoError("load_path: ragged row in " + file);
    }
    if (std::atoi(cells[0].c_str()) != t_expect) {
      throw IoError("load_path: non-consecutive time index in " + file);
    }
    ++t_expect;
    std::vector<double> row(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) row[static_cast<std::size_t>(j)] = parse_double(cells[static_cast<std::size_t>(j) + 1], file);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("load_path: no observations in " + file);
  VarPath path;
  path.data.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (int j = 0; j < d; ++j) path.data(static_cast<Eigen::Index>(t), j) = rows[t][static_cast<std::size_t>(j)];
  }
  return path;
}

// Headerless numeric CSV for matrices (gamma, sigma inputs).
inline void save_matrix(const MatrixXd& m, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw IoError("save_matrix: cannot open " + file);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) os << ",";
      os << format_double(m(i, j));
    }
    os << "\n";
  }
  if (!os) throw IoError("save_matrix: write failed for " + file);
}

inline MatrixXd load_matrix(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw IoError("load_matrix: cannot open " + file);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (const std::string& c : cells) row.push_back(parse_double(c, file));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("load_matrix: ragged rows in " + file);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("load_matrix: empty file " + file);
  MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

inline void save_text(const std::string& content, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw IoError("save_text: cannot open " + file);
  os << content;
  if (!os) throw IoError("save_text: write failed for " + file);
}

inline std::string load_text(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw IoError("load_text: cannot open " + file);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace io
}  // namespace uvi
