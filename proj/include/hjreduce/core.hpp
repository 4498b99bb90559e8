#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hjreduce {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;
using MutSpan = std::span<double>;

enum class ErrorKind {
  config,
  divergence,
  fold,
  coverage,
  domain_exit,
  conjugate_point,
  no_convergence,
  grid_mismatch,
  not_applicable,
  unsupported_domain,
  vacuum_node,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::fold: return "fold";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::domain_exit: return "domain_exit";
    case ErrorKind::conjugate_point: return "conjugate_point";
    case ErrorKind::no_convergence: return "no_convergence";
    case ErrorKind::grid_mismatch: return "grid_mismatch";
    case ErrorKind::not_applicable: return "not_applicable";
    case ErrorKind::unsupported_domain: return "unsupported_domain";
    case ErrorKind::vacuum_node: return "vacuum_node";
  }
  return "unknown";
}

/// Where and when a solver gave up. `node` is a position in configuration
/// space; `determinant` is only meaningful for fold/coverage records.
struct ErrorRecord {
  Vec node;
  double time = 0.0;
  double determinant = std::nan("");
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what, std::optional<ErrorRecord> record = std::nullopt)
      : std::runtime_error(what), kind_(kind), record_(std::move(record)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::optional<ErrorRecord>& record() const noexcept { return record_; }

 private:
  ErrorKind kind_;
  std::optional<ErrorRecord> record_;
};

inline bool all_finite(ConstSpan values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

inline double norm2(ConstSpan v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dot(ConstSpan a, ConstSpan b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ---------------------------------------------------------------------------
// Grid

struct Axis {
  double lower = 0.0;
  double upper = 1.0;
  std::size_t points = 3;
  bool periodic = false;

  double spacing() const {
    return periodic ? (upper - lower) / static_cast<double>(points)
                    : (upper - lower) / static_cast<double>(points - 1);
  }
  double length() const { return upper - lower; }
  double coordinate(std::size_t i) const { return lower + static_cast<double>(i) * spacing(); }
};

/// Uniform rectangular lattice. Node index is row-major with the last axis
/// varying fastest, which matches the FFTW multi-dimensional layout.
class Grid {
 public:
  Grid() = default;

  explicit Grid(std::vector<Axis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw Error(ErrorKind::config, "grid needs at least one axis");
    for (const auto& a : axes_) {
      if (a.points < 3) throw Error(ErrorKind::config, "grid axis needs at least 3 points");
      if (!(a.upper > a.lower)) throw Error(ErrorKind::config, "grid axis needs upper > lower");
    }
    strides_.assign(axes_.size(), 1);
    for (std::size_t d = axes_.size() - 1; d > 0; --d) strides_[d - 1] = strides_[d] * axes_[d].points;
    size_ = strides_[0] * axes_[0].points;
  }

  static Grid line(double lower, double upper, std::size_t points, bool periodic = false) {
    return Grid({Axis{lower, upper, points, periodic}});
  }

  static Grid square(double lower, double upper, std::size_t points, bool periodic = false) {
    return Grid({Axis{lower, upper, points, periodic}, Axis{lower, upper, points, periodic}});
  }

  std::size_t dim() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  const Axis& axis(std::size_t d) const { return axes_[d]; }
  const std::vector<Axis>& axes() const { return axes_; }
  double spacing(std::size_t d) const { return axes_[d].spacing(); }
  std::size_t stride(std::size_t d) const { return strides_[d]; }
  bool periodic(std::size_t d) const { return axes_[d].periodic; }
  bool fully_periodic() const {
    return std::all_of(axes_.begin(), axes_.end(), [](const Axis& a) { return a.periodic; });
  }

  double cell_volume() const {
    double v = 1.0;
    for (std::size_t d = 0; d < dim(); ++d) v *= spacing(d);
    return v;
  }

  std::size_t index_along(std::size_t node, std::size_t d) const {
    return (node / strides_[d]) % axes_[d].points;
  }

  std::vector<std::size_t> multi_index(std::size_t node) const {
    std::vector<std::size_t> idx(dim());
    for (std::size_t d = 0; d < dim(); ++d) idx[d] = index_along(node, d);
    return idx;
  }

  std::size_t flat_index(const std::vector<std::size_t>& idx) const {
    std::size_t n = 0;
    for (std::size_t d = 0; d < dim(); ++d) n += idx[d] * strides_[d];
    return n;
  }

  double coordinate(std::size_t node, std::size_t d) const {
    return axes_[d].coordinate(index_along(node, d));
  }

  Vec position(std::size_t node) const {
    Vec x(dim());
    for (std::size_t d = 0; d < dim(); ++d) x[d] = coordinate(node, d);
    return x;
  }

  /// Same lattice of node coordinates, regardless of how the boundary is treated.
  bool same_nodes(const Grid& other, double tol = 1e-12) const {
    if (dim() != other.dim()) return false;
    for (std::size_t d = 0; d < dim(); ++d) {
      const auto& a = axes_[d];
      const auto& b = other.axes_[d];
      if (a.points != b.points) return false;
      if (std::abs(a.lower - b.lower) > tol * std::max(1.0, std::abs(a.lower))) return false;
      if (std::abs(a.spacing() - b.spacing()) > tol * std::max(1.0, a.spacing())) return false;
    }
    return true;
  }

  bool operator==(const Grid& other) const {
    if (!same_nodes(other)) return false;
    for (std::size_t d = 0; d < dim(); ++d)
      if (axes_[d].periodic != other.axes_[d].periodic) return false;
    return true;
  }

  /// The node lattice re-described as a closed, non-periodic box.
  Grid as_open() const {
    std::vector<Axis> axes = axes_;
    for (auto& a : axes) {
      if (a.periodic) {
        a.upper = a.lower + static_cast<double>(a.points - 1) * a.spacing();
        a.periodic = false;
      }
    }
    return Grid(std::move(axes));
  }

 private:
  std::vector<Axis> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

// ---------------------------------------------------------------------------
// Fields

struct ScalarField {
  Grid grid;
  Vec values;
  double time = 0.0;

  ScalarField() = default;
  ScalarField(Grid g, double t) : grid(std::move(g)), values(grid.size(), 0.0), time(t) {}
  ScalarField(Grid g, Vec v, double t) : grid(std::move(g)), values(std::move(v)), time(t) {
    if (values.size() != grid.size())
      throw Error(ErrorKind::grid_mismatch, "scalar field value count does not match grid");
  }

  double& operator[](std::size_t node) { return values[node]; }
  double operator[](std::size_t node) const { return values[node]; }
};

/// Node-major storage: component c of node n lives at n * components + c.
struct VectorField {
  Grid grid;
  std::size_t components = 0;
  Vec values;
  double time = 0.0;

  VectorField() = default;
  VectorField(Grid g, std::size_t comps, double t)
      : grid(std::move(g)), components(comps), values(grid.size() * comps, 0.0), time(t) {}
  VectorField(Grid g, std::size_t comps, Vec v, double t)
      : grid(std::move(g)), components(comps), values(std::move(v)), time(t) {
    if (values.size() != grid.size() * components)
      throw Error(ErrorKind::grid_mismatch, "vector field value count does not match grid");
  }

  std::span<double> at(std::size_t node) { return {values.data() + node * components, components}; }
  std::span<const double> at(std::size_t node) const {
    return {values.data() + node * components, components};
  }

  Vec component(std::size_t c) const {
    Vec out(grid.size());
    for (std::size_t n = 0; n < grid.size(); ++n) out[n] = values[n * components + c];
    return out;
  }
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!(a == b)) throw Error(ErrorKind::grid_mismatch, std::string("grid mismatch: ") + what);
}

// ---------------------------------------------------------------------------
// Trajectory

struct Trajectory {
  Vec times;
  std::vector<Vec> positions;
  std::vector<Vec> velocities;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  std::size_t dim() const { return positions.empty() ? 0 : positions.front().size(); }

  void push(double t, ConstSpan x, ConstSpan v) {
    if (!times.empty() && !(t > times.back()))
      throw Error(ErrorKind::config, "trajectory times must be strictly increasing");
    times.push_back(t);
    positions.emplace_back(x.begin(), x.end());
    velocities.emplace_back(v.begin(), v.end());
  }
};

// ---------------------------------------------------------------------------
// Finite differences on grids

/// Second-order derivative of node-major data along `axis`: central in the
/// interior, wrapped on periodic axes, second-order one-sided at open ends.
/// `stride_components`/`component` select one component of a vector field.
inline double grid_partial(const Grid& grid, ConstSpan data, std::size_t node, std::size_t axis,
                           std::size_t components = 1, std::size_t component = 0) {
  const std::size_t n = grid.axis(axis).points;
  const std::size_t i = grid.index_along(node, axis);
  const std::size_t s = grid.stride(axis);
  const double h = grid.spacing(axis);
  auto value = [&](std::size_t nd) { return data[nd * components + component]; };
  const std::size_t base = node - i * s;
  auto at = [&](std::size_t j) { return value(base + j * s); };

  if (grid.periodic(axis)) {
    const std::size_t ip = (i + 1) % n;
    const std::size_t im = (i + n - 1) % n;
    return (at(ip) - at(im)) / (2.0 * h);
  }
  if (i == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
  if (i == n - 1) return (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
  return (at(i + 1) - at(i - 1)) / (2.0 * h);
}

inline Vec grid_derivative(const Grid& grid, ConstSpan data, std::size_t axis,
                           std::size_t components = 1, std::size_t component = 0) {
  Vec out(grid.size());
  for (std::size_t nd = 0; nd < grid.size(); ++nd)
    out[nd] = grid_partial(grid, data, nd, axis, components, component);
  return out;
}

/// True when the node has a full central stencil along every open axis.
inline bool is_interior(const Grid& grid, std::size_t node) {
  for (std::size_t d = 0; d < grid.dim(); ++d) {
    if (grid.periodic(d)) continue;
    const std::size_t i = grid.index_along(node, d);
    if (i == 0 || i + 1 == grid.axis(d).points) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Multilinear interpolation

/// Cell lookup for one axis: returns lower node index and local weight in [0,1].
/// nullopt when the coordinate is outside an open axis.
inline std::optional<std::pair<std::size_t, double>> locate(const Axis& a, double x) {
  const double h = a.spacing();
  if (a.periodic) {
    double u = std::fmod(x - a.lower, a.length());
    if (u < 0) u += a.length();
    double s = u / h;
    auto i = static_cast<std::size_t>(std::floor(s));
    if (i >= a.points) i = a.points - 1;
    return std::make_pair(i, s - static_cast<double>(i));
  }
  const double slack = 1e-12 * std::max(1.0, std::abs(a.upper - a.lower));
  if (x < a.lower - slack || x > a.upper + slack) return std::nullopt;
  double s = (x - a.lower) / h;
  s = std::clamp(s, 0.0, static_cast<double>(a.points - 1));
  auto i = static_cast<std::size_t>(std::floor(s));
  if (i >= a.points - 1) i = a.points - 2;
  return std::make_pair(i, s - static_cast<double>(i));
}

/// Interpolates every component of node-major data at `x`. Returns false if
/// `x` is outside the grid.
inline bool interpolate(const Grid& grid, ConstSpan data, std::size_t components, ConstSpan x,
                        MutSpan out) {
  const std::size_t dim = grid.dim();
  std::vector<std::size_t> lo(dim);
  Vec w(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    auto cell = locate(grid.axis(d), x[d]);
    if (!cell) return false;
    lo[d] = cell->first;
    w[d] = cell->second;
  }
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t corners = std::size_t{1} << dim;
  for (std::size_t c = 0; c < corners; ++c) {
    double weight = 1.0;
    std::size_t node = 0;
    for (std::size_t d = 0; d < dim; ++d) {
      const bool up = (c >> d) & 1U;
      std::size_t i = lo[d] + (up ? 1 : 0);
      if (i >= grid.axis(d).points) i = 0;  // periodic wrap
      weight *= up ? w[d] : 1.0 - w[d];
      node += i * grid.stride(d);
    }
    if (weight == 0.0) continue;
    for (std::size_t k = 0; k < components; ++k) out[k] += weight * data[node * components + k];
  }
  return true;
}

}  // namespace hjreduce
