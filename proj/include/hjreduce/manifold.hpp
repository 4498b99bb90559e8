#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hjreduce/core.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/newton.hpp"
#include "hjreduce/parallel.hpp"
#include "hjreduce/rk4.hpp"

namespace hjreduce::manifold {

/// Initial velocity field G0, callable as g0(x, out).
using InitialVelocity = std::function<void(ConstSpan x, MutSpan v)>;
/// Slaving field G(x, t), callable as g(x, t, out).
using VelocityProvider = std::function<void(ConstSpan x, double t, MutSpan v)>;

/// Axis-aligned box in configuration space.
struct Box {
  Vec lower;
  Vec upper;

  static Box of(const Grid& grid) {
    Box b;
    for (const auto& a : grid.axes()) {
      b.lower.push_back(a.lower);
      b.upper.push_back(a.upper);
    }
    return b;
  }

  bool contains(ConstSpan x, double slack = 1e-12) const {
    for (std::size_t d = 0; d < lower.size(); ++d) {
      const double pad = slack * std::max(1.0, upper[d] - lower[d]);
      if (!(x[d] >= lower[d] - pad && x[d] <= upper[d] + pad)) return false;
    }
    return true;
  }
};

struct BuildOptions {
  std::size_t seed_factor = 2;
  double fold_threshold = 1e-6;
  /// Total relative inflation of each axis of the seed box.
  double inflation = 0.25;
  /// Seed-box doublings attempted before a coverage failure is reported.
  std::size_t max_expansions = 10;
  std::size_t newton_max_iterations = 50;
  double newton_tolerance = 1e-10;
  /// Keep every step of every characteristic (memory heavy).
  bool keep_trajectories = false;
};

/// Seeds on a lattice over a box, integrated in lockstep. Flow-map samples
/// are stored per output time, seed-major.
struct CharacteristicBundle {
  std::size_t dim = 0;
  std::vector<std::size_t> lattice;
  Box seed_box;
  std::vector<Vec> seeds;
  InitialVelocity initial_velocity;
  Vec output_times;
  std::vector<std::vector<Vec>> positions;
  std::vector<std::vector<Vec>> velocities;
  std::vector<Trajectory> trajectories;
  /// Smallest flow-map Jacobian determinant seen over the whole run.
  double min_determinant = std::numeric_limits<double>::infinity();

  std::size_t size() const { return seeds.size(); }
};

namespace detail {

/// Union of the fixed-step nodes k*dt up to t_max (last step shortened) and the
/// requested output times.
inline Vec merged_schedule(double t0, double t_max, double dt, const Vec& outputs) {
  const std::size_t steps = step_count(t0, t_max, dt);
  Vec nodes;
  nodes.reserve(steps + outputs.size() + 1);
  for (std::size_t k = 0; k <= steps; ++k) nodes.push_back(schedule_time(t0, t_max, dt, k, steps));
  for (double t : outputs) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
    const double tol = 1e-9 * dt;
    bool present = false;
    if (it != nodes.end() && std::abs(*it - t) <= tol) present = true;
    if (it != nodes.begin() && std::abs(*(it - 1) - t) <= tol) present = true;
    if (!present) nodes.insert(it, t);
  }
  return nodes;
}

inline std::size_t nearest_index(const Vec& nodes, double t) {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), t);
  if (it == nodes.end()) return nodes.size() - 1;
  auto k = static_cast<std::size_t>(it - nodes.begin());
  if (k > 0 && std::abs(nodes[k - 1] - t) < std::abs(nodes[k] - t)) --k;
  return k;
}

inline double determinant(const Eigen::MatrixXd& j) {
  if (j.rows() == 1) return j(0, 0);
  if (j.rows() == 2) return j(0, 0) * j(1, 1) - j(0, 1) * j(1, 0);
  return j.determinant();
}

/// Flow-map Jacobian at every seed from lattice neighbour differences.
inline Vec lattice_determinants(const CharacteristicBundle& b, const std::vector<Vec>& pos) {
  const std::size_t n = b.dim;
  const std::size_t count = b.seeds.size();
  std::vector<std::size_t> stride(n, 1);
  for (std::size_t d = n; d-- > 1;) stride[d - 1] = stride[d] * b.lattice[d];
  Vec dets(count);
  Eigen::MatrixXd j(n, n);
  for (std::size_t s = 0; s < count; ++s) {
    for (std::size_t d = 0; d < n; ++d) {
      const std::size_t i = (s / stride[d]) % b.lattice[d];
      const std::size_t lo = i == 0 ? s : s - stride[d];
      const std::size_t hi = i + 1 == b.lattice[d] ? s : s + stride[d];
      const double dx0 = b.seeds[hi][d] - b.seeds[lo][d];
      for (std::size_t r = 0; r < n; ++r) j(r, d) = (pos[hi][r] - pos[lo][r]) / dx0;
    }
    dets[s] = determinant(j);
  }
  return dets;
}

struct Point2 {
  double x, y;
};

inline double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Counter-clockwise convex hull (monotone chain).
inline std::vector<Point2> convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const Point2& a, const Point2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (pts.size() < 3) return pts;
  std::vector<Point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline bool inside_hull(const std::vector<Point2>& hull, const Point2& p, double tol) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Point2& a = hull[i];
    const Point2& b = hull[(i + 1) % hull.size()];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (cross(a, b, p) < -tol * len) return false;
  }
  return true;
}

}  // namespace detail

/// Integrates a lattice of characteristics with slaved initial velocity over
/// `seed_box` and records the flow map at each output time. Raises FOLD as
/// soon as the flow-map Jacobian determinant drops below the threshold.
inline CharacteristicBundle integrate_bundle(const ForceModel& model, const InitialVelocity& g0,
                                             const Box& seed_box,
                                             const std::vector<std::size_t>& lattice,
                                             Vec output_times, double dt,
                                             const BuildOptions& opt = {}) {
  model.validate();
  const std::size_t n = model.dim;
  if (!g0) throw Error(ErrorKind::config, "initial velocity field is required");
  if (lattice.size() != n || seed_box.lower.size() != n)
    throw Error(ErrorKind::config, "seed lattice does not match model dimension");
  if (output_times.empty()) throw Error(ErrorKind::config, "at least one output time is required");
  std::sort(output_times.begin(), output_times.end());
  if (!(output_times.front() >= 0.0)) throw Error(ErrorKind::config, "output times must be non-negative");
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");

  CharacteristicBundle b;
  b.dim = n;
  b.lattice = lattice;
  b.seed_box = seed_box;
  b.initial_velocity = g0;
  b.output_times = output_times;

  std::size_t count = 1;
  for (std::size_t p : lattice) {
    if (p < 2) throw Error(ErrorKind::config, "seed lattice needs at least two points per axis");
    count *= p;
  }
  b.seeds.resize(count, Vec(n));
  for (std::size_t s = 0; s < count; ++s) {
    std::size_t rem = s;
    for (std::size_t d = n; d-- > 0;) {
      const std::size_t i = rem % lattice[d];
      rem /= lattice[d];
      const double frac = static_cast<double>(i) / static_cast<double>(lattice[d] - 1);
      b.seeds[s][d] = seed_box.lower[d] + frac * (seed_box.upper[d] - seed_box.lower[d]);
    }
  }

  // state layout: seed-major [x(n), v(n)]
  Vec state(count * 2 * n);
  for (std::size_t s = 0; s < count; ++s) {
    double* y = state.data() + s * 2 * n;
    std::copy(b.seeds[s].begin(), b.seeds[s].end(), y);
    g0(b.seeds[s], MutSpan(y + n, n));
    if (!all_finite(ConstSpan(y, 2 * n)))
      throw Error(ErrorKind::config, "initial velocity field is not finite",
                  ErrorRecord{b.seeds[s], 0.0});
  }
  if (opt.keep_trajectories) {
    b.trajectories.resize(count);
    for (std::size_t s = 0; s < count; ++s) {
      const double* y = state.data() + s * 2 * n;
      b.trajectories[s].push(0.0, ConstSpan(y, n), ConstSpan(y + n, n));
    }
  }

  const Vec nodes = output_times.back() > 0.0
                       ? detail::merged_schedule(0.0, output_times.back(), dt, output_times)
                       : Vec{0.0};
  std::vector<std::size_t> output_step;
  for (double t : output_times) output_step.push_back(detail::nearest_index(nodes, t));
  std::size_t next_output = 0;
  auto emit = [&](std::size_t step) {
    while (next_output < output_step.size() && output_step[next_output] == step) {
      std::vector<Vec> xs(count), vs(count);
      for (std::size_t s = 0; s < count; ++s) {
        const double* y = state.data() + s * 2 * n;
        xs[s].assign(y, y + n);
        vs[s].assign(y + n, y + 2 * n);
      }
      b.positions.push_back(std::move(xs));
      b.velocities.push_back(std::move(vs));
      ++next_output;
    }
  };
  emit(0);

  auto rhs = [&](double t, ConstSpan y, MutSpan dy) {
    std::copy(y.begin() + static_cast<std::ptrdiff_t>(n), y.end(), dy.begin());
    total_force(model, y.subspan(0, n), y.subspan(n, n), t, dy.subspan(n, n));
  };

  const std::size_t chunks = std::min(count, worker_count() * 4);
  std::vector<Vec> pos(count, Vec(n));
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const double ta = nodes[k], tb = nodes[k + 1];
    parallel_for(
        chunks,
        [&](std::size_t c) {
          Rk4 rk(2 * n);
          auto r = rhs;
          for (std::size_t s = count * c / chunks; s < count * (c + 1) / chunks; ++s) {
            MutSpan y(state.data() + s * 2 * n, 2 * n);
            rk.step(r, ta, y, tb - ta);
            if (!all_finite(y))
              throw Error(ErrorKind::divergence, "characteristic diverged",
                          ErrorRecord{b.seeds[s], tb});
          }
        },
        1);
    for (std::size_t s = 0; s < count; ++s) {
      const double* y = state.data() + s * 2 * n;
      std::copy(y, y + n, pos[s].begin());
      if (opt.keep_trajectories) b.trajectories[s].push(tb, ConstSpan(y, n), ConstSpan(y + n, n));
    }
    const Vec dets = detail::lattice_determinants(b, pos);
    auto worst = std::min_element(dets.begin(), dets.end());
    b.min_determinant = std::min(b.min_determinant, *worst);
    if (*worst < opt.fold_threshold) {
      const auto s = static_cast<std::size_t>(worst - dets.begin());
      throw Error(ErrorKind::fold,
                  "flow map folds at t=" + std::to_string(tb) + " (det " + std::to_string(*worst) +
                      ")",
                  ErrorRecord{pos[s], tb, *worst});
    }
    emit(k + 1);
  }
  return b;
}

/// Position and velocity at time t of the characteristic started at x0, on the
/// same step schedule as newton::integrate.
inline std::pair<Vec, Vec> flow_map(const ForceModel& model, const InitialVelocity& g0, ConstSpan x0,
                                    double t, double dt) {
  const std::size_t n = model.dim;
  Vec y(2 * n);
  std::copy(x0.begin(), x0.end(), y.begin());
  g0(x0, MutSpan(y.data() + n, n));
  auto rhs = [&](double tt, ConstSpan s, MutSpan dy) {
    std::copy(s.begin() + static_cast<std::ptrdiff_t>(n), s.end(), dy.begin());
    total_force(model, s.subspan(0, n), s.subspan(n, n), tt, dy.subspan(n, n));
  };
  integrate_fixed(rhs, 0.0, y, t, dt, [](double, ConstSpan) {});
  return {Vec(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n)),
          Vec(y.begin() + static_cast<std::ptrdiff_t>(n), y.end())};
}

namespace detail {

struct CoverageGap {
  Vec node;
  double time;
};

inline std::optional<CoverageGap> gather_1d(const Grid& grid, const std::vector<Vec>& xs,
                                            const std::vector<Vec>& vs, double t, VectorField& out) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a][0] < xs[b][0]; });
  Vec ax(order.size()), av(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    ax[i] = xs[order[i]][0];
    av[i] = vs[order[i]][0];
  }
  for (std::size_t nd = 0; nd < grid.size(); ++nd) {
    const double x = grid.coordinate(nd, 0);
    if (x < ax.front() || x > ax.back()) return CoverageGap{{x}, t};
    auto it = std::lower_bound(ax.begin(), ax.end(), x);
    auto hi = static_cast<std::size_t>(it - ax.begin());
    if (hi == 0) hi = 1;
    const std::size_t lo = hi - 1;
    const double span = ax[hi] - ax[lo];
    const double w = span > 0 ? (x - ax[lo]) / span : 0.0;
    out.values[nd] = (1.0 - w) * av[lo] + w * av[hi];
  }
  return std::nullopt;
}

inline std::optional<CoverageGap> check_hull(const Grid& grid, const std::vector<Vec>& xs,
                                             double t) {
  std::vector<Point2> pts;
  pts.reserve(xs.size());
  for (const auto& x : xs) pts.push_back({x[0], x[1]});
  const auto hull = convex_hull(std::move(pts));
  const double scale = std::max(grid.axis(0).length(), grid.axis(1).length());
  for (std::size_t nd = 0; nd < grid.size(); ++nd) {
    const Vec p = grid.position(nd);
    if (!inside_hull(hull, {p[0], p[1]}, 1e-12 * scale)) return CoverageGap{p, t};
  }
  return std::nullopt;
}

/// Bounding-box coverage for dimensions above two.
inline std::optional<CoverageGap> check_bounds(const Grid& grid, const std::vector<Vec>& xs,
                                               double t) {
  const std::size_t n = grid.dim();
  Vec lo(n, std::numeric_limits<double>::infinity()), hi(n, -lo[0]);
  for (const auto& x : xs)
    for (std::size_t d = 0; d < n; ++d) {
      lo[d] = std::min(lo[d], x[d]);
      hi[d] = std::max(hi[d], x[d]);
    }
  for (std::size_t nd = 0; nd < grid.size(); ++nd) {
    const Vec p = grid.position(nd);
    for (std::size_t d = 0; d < n; ++d)
      if (p[d] < lo[d] || p[d] > hi[d]) return CoverageGap{p, t};
  }
  return std::nullopt;
}

/// Damped Newton solve of flow_map(x0) = target starting from `guess`.
inline void invert_flow(const ForceModel& model, const InitialVelocity& g0, ConstSpan target,
                        double t, double dt, Vec guess, const BuildOptions& opt, MutSpan velocity) {
  const std::size_t n = model.dim;
  auto residual = [&](const Vec& x0, Vec& r, Vec& v) {
    auto [x, vv] = flow_map(model, g0, x0, t, dt);
    for (std::size_t i = 0; i < n; ++i) r[i] = x[i] - target[i];
    v = std::move(vv);
  };
  Vec r(n), v(n), rp(n), vp(n);
  residual(guess, r, v);
  double rn = norm2(r);
  static const double eta_base = std::sqrt(std::numeric_limits<double>::epsilon());
  Eigen::MatrixXd jac(n, n);
  Eigen::VectorXd rhs(n);
  for (std::size_t it = 0; it < opt.newton_max_iterations && rn > opt.newton_tolerance; ++it) {
    for (std::size_t d = 0; d < n; ++d) {
      Vec probe = guess;
      const double eta = eta_base * std::max(1.0, std::abs(guess[d]));
      probe[d] += eta;
      residual(probe, rp, vp);
      for (std::size_t i = 0; i < n; ++i) jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = (rp[i] - r[i]) / eta;
    }
    const double det = detail::determinant(jac);
    if (std::abs(det) < opt.fold_threshold)
      throw Error(ErrorKind::fold, "flow map is singular during inversion",
                  ErrorRecord{Vec(target.begin(), target.end()), t, det});
    for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = -r[i];
    const Eigen::VectorXd step = jac.partialPivLu().solve(rhs);
    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      Vec trial = guess;
      for (std::size_t d = 0; d < n; ++d) trial[d] += lambda * step(static_cast<Eigen::Index>(d));
      residual(trial, rp, vp);
      const double trial_norm = norm2(rp);
      if (trial_norm < rn) {
        guess = std::move(trial);
        r = rp;
        v = vp;
        rn = trial_norm;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) break;
  }
  if (!(rn <= opt.newton_tolerance))
    throw Error(ErrorKind::coverage,
                "inverse flow did not converge (residual " + std::to_string(rn) + ")",
                ErrorRecord{Vec(target.begin(), target.end()), t});
  std::copy(v.begin(), v.end(), velocity.begin());
}

inline Box inflated_box(const Grid& grid, double factor) {
  Box b = Box::of(grid);
  for (std::size_t d = 0; d < grid.dim(); ++d) {
    const double c = 0.5 * (b.lower[d] + b.upper[d]);
    const double half = 0.5 * (b.upper[d] - b.lower[d]) * factor;
    b.lower[d] = c - half;
    b.upper[d] = c + half;
  }
  return b;
}

}  // namespace detail

/// G on the grid nodes at each requested time, built from one bundle.
inline std::vector<VectorField> build_G_series(const ForceModel& model, const InitialVelocity& g0,
                                               const Grid& grid, Vec times, double dt,
                                               const BuildOptions& opt = {}) {
  model.validate();
  const std::size_t n = model.dim;
  if (grid.dim() != n) throw Error(ErrorKind::grid_mismatch, "grid dimension differs from model");
  if (opt.seed_factor < 1) throw Error(ErrorKind::config, "seed factor must be at least 1");
  std::sort(times.begin(), times.end());

  std::vector<std::size_t> lattice(n);
  for (std::size_t d = 0; d < n; ++d)
    lattice[d] = std::max<std::size_t>(2, opt.seed_factor * grid.axis(d).points);

  std::optional<detail::CoverageGap> gap;
  double min_det = std::numeric_limits<double>::infinity();
  for (std::size_t attempt = 0; attempt <= opt.max_expansions; ++attempt) {
    const double factor = (1.0 + opt.inflation) * std::ldexp(1.0, static_cast<int>(attempt));
    const Box box = detail::inflated_box(grid, factor);
    const auto bundle = integrate_bundle(model, g0, box, lattice, times, dt, opt);
    min_det = bundle.min_determinant;

    gap.reset();
    for (std::size_t k = 0; k < times.size() && !gap; ++k) {
      if (n == 2)
        gap = detail::check_hull(grid, bundle.positions[k], times[k]);
      else if (n > 2)
        gap = detail::check_bounds(grid, bundle.positions[k], times[k]);
    }
    if (gap) continue;

    std::vector<VectorField> out;
    for (std::size_t k = 0; k < times.size(); ++k) {
      VectorField g(grid, n, times[k]);
      if (times[k] == 0.0) {
        for (std::size_t nd = 0; nd < grid.size(); ++nd) g0(grid.position(nd), g.at(nd));
      } else if (n == 1) {
        gap = detail::gather_1d(grid, bundle.positions[k], bundle.velocities[k], times[k], g);
        if (gap) break;
      } else {
        const auto& xs = bundle.positions[k];
        parallel_for(grid.size(), [&](std::size_t nd) {
          const Vec p = grid.position(nd);
          std::size_t best = 0;
          double best_d = std::numeric_limits<double>::infinity();
          for (std::size_t s = 0; s < xs.size(); ++s) {
            double dd = 0.0;
            for (std::size_t d = 0; d < n; ++d) dd += (xs[s][d] - p[d]) * (xs[s][d] - p[d]);
            if (dd < best_d) {
              best_d = dd;
              best = s;
            }
          }
          detail::invert_flow(model, g0, p, times[k], dt, bundle.seeds[best], opt, g.at(nd));
        });
      }
      out.push_back(std::move(g));
    }
    if (!gap) return out;
  }
  throw Error(ErrorKind::coverage, "characteristics do not cover the grid",
              ErrorRecord{gap->node, gap->time, min_det});
}

inline VectorField build_G(const ForceModel& model, const InitialVelocity& g0, const Grid& grid,
                           double t, double dt, std::size_t seed_factor = 2) {
  BuildOptions opt;
  opt.seed_factor = seed_factor;
  return build_G_series(model, g0, grid, {t}, dt, opt).front();
}

/// Norm of dG/dx . G + dG/dt - f(x, G, t) at the middle of three slices, by
/// central differences in space and time.
inline ScalarField residual_G(const ForceModel& model, const VectorField& prev,
                              const VectorField& mid, const VectorField& next, double dt) {
  require_same_grid(prev.grid, mid.grid, "residual slices");
  require_same_grid(next.grid, mid.grid, "residual slices");
  const std::size_t n = model.dim;
  if (mid.components != n || prev.components != n || next.components != n || mid.grid.dim() != n)
    throw Error(ErrorKind::grid_mismatch, "residual slices do not match model dimension");
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
  const Grid& grid = mid.grid;
  ScalarField out(grid, mid.time);
  parallel_for(grid.size(), [&](std::size_t nd) {
    const Vec x = grid.position(nd);
    auto g = mid.at(nd);
    Vec f(n);
    total_force(model, x, g, mid.time, f);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double r = (next.values[nd * n + i] - prev.values[nd * n + i]) / (2.0 * dt) - f[i];
      for (std::size_t j = 0; j < n; ++j) r += grid_partial(grid, mid.values, nd, j, n, i) * g[j];
      sq += r * r;
    }
    out.values[nd] = std::sqrt(sq);
  });
  return out;
}

/// Velocity provider that interpolates a time series of grid fields:
/// multilinear in space, linear in time. Leaving the grid is a domain exit.
class FieldSeriesProvider {
 public:
  explicit FieldSeriesProvider(std::vector<VectorField> series) : series_(std::move(series)) {
    if (series_.empty()) throw Error(ErrorKind::config, "field series is empty");
    std::sort(series_.begin(), series_.end(),
              [](const VectorField& a, const VectorField& b) { return a.time < b.time; });
    for (const auto& f : series_) require_same_grid(series_.front().grid, f.grid, "field series");
  }

  void operator()(ConstSpan x, double t, MutSpan out) const {
    const std::size_t c = series_.front().components;
    const double t0 = series_.front().time, t1 = series_.back().time;
    const double slack = 1e-9 * std::max(1.0, std::abs(t1 - t0));
    if (t < t0 - slack || t > t1 + slack)
      throw Error(ErrorKind::domain_exit, "time outside the field series",
                  ErrorRecord{Vec(x.begin(), x.end()), t});
    std::size_t hi = 0;
    while (hi + 1 < series_.size() && series_[hi].time < t) ++hi;
    const std::size_t lo = hi == 0 ? 0 : hi - 1;
    const double span = series_[hi].time - series_[lo].time;
    const double w = span > 0 ? std::clamp((t - series_[lo].time) / span, 0.0, 1.0) : 1.0;
    Vec a(c), b(c);
    if (!interpolate(series_[lo].grid, series_[lo].values, c, x, a) ||
        !interpolate(series_[hi].grid, series_[hi].values, c, x, b))
      throw Error(ErrorKind::domain_exit, "position outside the field grid",
                  ErrorRecord{Vec(x.begin(), x.end()), t});
    for (std::size_t k = 0; k < c; ++k) out[k] = (1.0 - w) * a[k] + w * b[k];
  }

  const std::vector<VectorField>& series() const { return series_; }

 private:
  std::vector<VectorField> series_;
};

/// Integrates x' = G(x, t) with classical RK4. The recorded velocities are G
/// along the path. Leaving `domain` raises a domain-exit error.
inline Trajectory integrate_reduced(const VelocityProvider& g, ConstSpan x0, double t_end, double dt,
                                    double t0 = 0.0, const std::optional<Box>& domain = std::nullopt) {
  if (!g) throw Error(ErrorKind::config, "velocity provider is required");
  const std::size_t n = x0.size();
  if (domain && !domain->contains(x0))
    throw Error(ErrorKind::domain_exit, "start point outside the domain",
                ErrorRecord{Vec(x0.begin(), x0.end()), t0});
  Vec y(x0.begin(), x0.end());
  auto rhs = [&](double t, ConstSpan x, MutSpan dx) { g(x, t, dx); };
  Trajectory traj;
  Vec v(n);
  integrate_fixed(rhs, t0, y, t_end, dt, [&](double t, ConstSpan x) {
    if (domain && !domain->contains(x))
      throw Error(ErrorKind::domain_exit, "reduced trajectory left the domain",
                  ErrorRecord{Vec(x.begin(), x.end()), t});
    g(x, t, v);
    traj.push(t, x, v);
  });
  return traj;
}

/// Largest position gap between the reduced trajectory and the Newton
/// trajectory with slaved initial velocity G(x0, t0).
inline double slaving_error(const ForceModel& model, const VelocityProvider& g, ConstSpan x0,
                            double t_end, double dt, double t0 = 0.0,
                            const std::optional<Box>& domain = std::nullopt) {
  const Trajectory reduced = integrate_reduced(g, x0, t_end, dt, t0, domain);
  Vec v0(x0.size());
  g(x0, t0, v0);
  const Trajectory full = newton::integrate(model, x0, v0, t_end, dt, t0);
  double worst = 0.0;
  for (std::size_t k = 0; k < std::min(reduced.size(), full.size()); ++k) {
    double sq = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double d = reduced.positions[k][i] - full.positions[k][i];
      sq += d * d;
    }
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

}  // namespace hjreduce::manifold
