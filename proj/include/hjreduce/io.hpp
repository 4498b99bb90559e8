#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "hjreduce/core.hpp"

namespace hjreduce::io {

/// Shortest round-trip-safe rendering used in every data file.
inline std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_row(std::ostream& os, const std::vector<double>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    os << number(row[i]);
  }
  os << '\n';
}

inline void write_header(std::ostream& os, const std::vector<std::string>& cols) {
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) os << ',';
    os << cols[i];
  }
  os << '\n';
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::config, "cannot open output file " + path);
  return os;
}

inline std::vector<std::string> coordinate_columns(std::size_t dim, const std::string& prefix = "x") {
  std::vector<std::string> cols;
  for (std::size_t d = 0; d < dim; ++d) cols.push_back(prefix + "_" + std::to_string(d + 1));
  return cols;
}

/// Columns t, x_1..x_dim, v_1..v_dim.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const std::size_t dim = traj.dim();
  auto cols = std::vector<std::string>{"t"};
  for (auto& c : coordinate_columns(dim, "x")) cols.push_back(c);
  for (auto& c : coordinate_columns(dim, "v")) cols.push_back(c);
  write_header(os, cols);
  std::vector<double> row;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    row.clear();
    row.push_back(traj.times[k]);
    row.insert(row.end(), traj.positions[k].begin(), traj.positions[k].end());
    row.insert(row.end(), traj.velocities[k].begin(), traj.velocities[k].end());
    write_row(os, row);
  }
}

/// Node coordinates followed by the field value(s), one node per row.
inline void write_field_csv(std::ostream& os, const ScalarField& f, const std::string& name = "S") {
  auto cols = coordinate_columns(f.grid.dim());
  cols.push_back(name);
  write_header(os, cols);
  std::vector<double> row;
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    row = f.grid.position(n);
    row.push_back(f.values[n]);
    write_row(os, row);
  }
}

inline void write_field_csv(std::ostream& os, const VectorField& f, const std::string& name = "G") {
  auto cols = coordinate_columns(f.grid.dim());
  for (auto& c : coordinate_columns(f.components, name)) cols.push_back(c);
  write_header(os, cols);
  std::vector<double> row;
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    row = f.grid.position(n);
    auto v = f.at(n);
    row.insert(row.end(), v.begin(), v.end());
    write_row(os, row);
  }
}

}  // namespace hjreduce::io
