#pragma once

// Plain CSV for matrices (one row per line, no header) and crash-safe file output.

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oligo/errors.hpp"

namespace oligo {

inline constexpr int kCsvDigits = 17;

inline void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& M) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(kCsvDigits);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? "," : "") << M(i, j);
    os << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

inline std::string matrix_csv(const Eigen::MatrixXd& M) {
  std::ostringstream os;
  write_matrix_csv(os, M);
  return os.str();
}

inline Eigen::MatrixXd read_matrix_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (true) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      std::string cell = line.substr(pos, end - pos);
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cell = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      require(!cell.empty() && ec == std::errc() && ptr == cell.data() + cell.size(), ErrorKind::InvalidParams,
              "line " + std::to_string(lineno) + ": '" + cell + "' is not a number");
      row.push_back(v);
      if (end == line.size()) break;
      pos = end + 1;
    }
    require(rows.empty() || row.size() == rows.front().size(), ErrorKind::InvalidParams,
            "line " + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::InvalidParams, "empty matrix file");
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return M;
}

inline Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::InvalidParams, "cannot open " + path.string());
  return read_matrix_csv(in);
}

/// Writes to a sibling temporary file and renames it over the target, so readers
/// never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace oligo
