#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "hjreduce/core.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/parallel.hpp"

namespace hjreduce::hj {

using InitialData = std::function<double(ConstSpan x)>;

/// Scalar dissipative Hamilton-Jacobi problem
///   dS/dt + |grad S|^2 / (2m) + V + nu S = 0,  S(x, 0) = g(x).
/// Only models whose non-potential forces reduce to linear damping qualify.
class HJProblem {
 public:
  HJProblem(ForceModel model, InitialData initial, Grid grid, double t_end, Vec outputs = {})
      : model_(std::move(model)),
        initial_(std::move(initial)),
        grid_(std::move(grid)),
        t_end_(t_end),
        outputs_(std::move(outputs)) {
    model_.validate();
    if (model_.nongradient)
      throw Error(ErrorKind::config,
                  "scalar solver requires the damping to be exactly -nu v (no extra D term)");
    if ((model_.velocity_potential || model_.velocity_potential_gradient) &&
        !model_.velocity_potential_uncoupled)
      throw Error(ErrorKind::config, "scalar solver requires a velocity potential of the form F(v, t)");
    if (!initial_) throw Error(ErrorKind::config, "initial data is required");
    if (grid_.dim() != model_.dim)
      throw Error(ErrorKind::grid_mismatch, "grid dimension differs from model");
    if (!(t_end_ > 0.0)) throw Error(ErrorKind::config, "end time must be positive");
    if (outputs_.empty()) outputs_.push_back(t_end_);
    std::sort(outputs_.begin(), outputs_.end());
    outputs_.erase(std::unique(outputs_.begin(), outputs_.end()), outputs_.end());
    if (outputs_.front() < 0.0 || outputs_.back() > t_end_ * (1.0 + 1e-12))
      throw Error(ErrorKind::config, "output times must lie in [0, t_end]");
  }

  const ForceModel& model() const { return model_; }
  const InitialData& initial() const { return initial_; }
  const Grid& grid() const { return grid_; }
  double t_end() const { return t_end_; }
  const Vec& outputs() const { return outputs_; }

 private:
  ForceModel model_;
  InitialData initial_;
  Grid grid_;
  double t_end_;
  Vec outputs_;
};

struct HJSolution {
  std::vector<ScalarField> fields;
  /// Open axes were closed with linear-extrapolation ghost nodes.
  bool extrapolated_boundary = false;
  std::size_t steps = 0;
  double smallest_step = std::numeric_limits<double>::infinity();
};

struct SolverOptions {
  double cfl = 0.5;
  double overflow_guard = 1e100;
};

namespace detail {

/// Lax-Friedrichs semi-discrete right-hand side -H_LF - V. The linear
/// damping -nu S is handled by the integrating factor in the stepper.
class LaxFriedrichs {
 public:
  LaxFriedrichs(const Grid& grid, const ForceModel& model) : grid_(grid), model_(model) {
    potential_.resize(grid.size(), 0.0);
    if (model.potential)
      for (std::size_t nd = 0; nd < grid.size(); ++nd) potential_[nd] = model.V(grid.position(nd));
  }

  /// Backward and forward differences of node-major S along axis d.
  void one_sided(const Vec& s, std::size_t nd, std::size_t d, double& back, double& fwd) const {
    const Axis& a = grid_.axis(d);
    const std::size_t n = a.points;
    const std::size_t i = grid_.index_along(nd, d);
    const std::size_t st = grid_.stride(d);
    const std::size_t base = nd - i * st;
    auto at = [&](std::size_t j) { return s[base + j * st]; };
    const double h = grid_.spacing(d);
    double left, right;
    if (a.periodic) {
      left = at((i + n - 1) % n);
      right = at((i + 1) % n);
    } else {
      // linear extrapolation ghosts: S_{-1} = 2 S_0 - S_1, S_n = 2 S_{n-1} - S_{n-2}
      left = i == 0 ? 2.0 * at(0) - at(1) : at(i - 1);
      right = i + 1 == n ? 2.0 * at(n - 1) - at(n - 2) : at(i + 1);
    }
    back = (at(i) - left) / h;
    fwd = (right - at(i)) / h;
  }

  /// Per-axis dissipation coefficient max |dS/dx_i| / m.
  Vec alphas(const Vec& s) const {
    const std::size_t dim = grid_.dim();
    Vec a(dim, 0.0);
    for (std::size_t nd = 0; nd < grid_.size(); ++nd)
      for (std::size_t d = 0; d < dim; ++d) {
        double b, f;
        one_sided(s, nd, d, b, f);
        a[d] = std::max({a[d], std::abs(b), std::abs(f)});
      }
    for (double& v : a) v /= model_.mass;
    return a;
  }

  void rhs(const Vec& s, const Vec& alpha, Vec& out) const {
    const std::size_t dim = grid_.dim();
    const double m = model_.mass;
    parallel_for(
        grid_.size(),
        [&](std::size_t nd) {
          double h = 0.0;
          for (std::size_t d = 0; d < dim; ++d) {
            double b, f;
            one_sided(s, nd, d, b, f);
            const double p = 0.5 * (b + f);
            h += p * p / (2.0 * m) - 0.5 * alpha[d] * (f - b);
          }
          out[nd] = -h - potential_[nd];
        },
        4096);
  }

 private:
  const Grid& grid_;
  const ForceModel& model_;
  Vec potential_;
};

}  // namespace detail

/// Method-of-lines solve with a Lax-Friedrichs Hamiltonian and three-stage
/// strong-stability-preserving RK in integrating-factor form, so constants
/// decay exactly like exp(-nu t). `dt` is the largest step taken; steps
/// shrink automatically to honour the CFL bound and to land on output times.
inline HJSolution solve_hj(const HJProblem& problem, double dt, const SolverOptions& opt = {}) {
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
  const Grid& grid = problem.grid();
  const ForceModel& model = problem.model();
  const std::size_t size = grid.size();
  for (std::size_t d = 0; d < grid.dim(); ++d)
    if (grid.axis(d).points < 3) throw Error(ErrorKind::config, "each axis needs at least 3 nodes");

  HJSolution sol;
  sol.extrapolated_boundary = !grid.fully_periodic();
  Vec s(size);
  for (std::size_t nd = 0; nd < size; ++nd) s[nd] = problem.initial()(grid.position(nd));
  if (!all_finite(s)) throw Error(ErrorKind::config, "initial data is not finite");

  detail::LaxFriedrichs lf(grid, model);
  Vec k(size), s1(size), s2(size);
  double t = 0.0;
  for (double target : problem.outputs()) {
    while (t < target - 1e-12 * std::max(1.0, target)) {
      const Vec alpha = lf.alphas(s);
      double rate = 0.0;
      for (std::size_t d = 0; d < grid.dim(); ++d) rate += alpha[d] / grid.spacing(d);
      double h = std::min(dt, target - t);
      if (rate > 0.0) h = std::min(h, opt.cfl / rate);
      if (target - t - h < 1e-12 * std::max(1.0, target)) h = target - t;

      const double e1 = std::exp(-model.nu * h), eh = std::exp(-0.5 * model.nu * h);
      lf.rhs(s, alpha, k);
      for (std::size_t i = 0; i < size; ++i) s1[i] = e1 * (s[i] + h * k[i]);
      lf.rhs(s1, alpha, k);
      for (std::size_t i = 0; i < size; ++i) s2[i] = 0.75 * eh * s[i] + 0.25 / eh * (s1[i] + h * k[i]);
      lf.rhs(s2, alpha, k);
      for (std::size_t i = 0; i < size; ++i)
        s[i] = e1 * s[i] / 3.0 + 2.0 / 3.0 * eh * (s2[i] + h * k[i]);
      t = (h == target - t) ? target : t + h;
      ++sol.steps;
      sol.smallest_step = std::min(sol.smallest_step, h);

      for (std::size_t i = 0; i < size; ++i)
        if (!std::isfinite(s[i]) || std::abs(s[i]) > opt.overflow_guard)
          throw Error(ErrorKind::divergence, "action field blew up at t=" + std::to_string(t),
                      ErrorRecord{grid.position(i), t});
    }
    sol.fields.emplace_back(grid, s, target);
  }
  return sol;
}

struct HopfLaxOptions {
  /// Half-width of the search box around x; non-positive picks 4 max(1, t/m).
  double radius = 0.0;
  /// Coarse scan points per axis.
  std::size_t coarse_points = 401;
  std::size_t sweeps = 4;
};

/// min_y g(y) + m |x - y|^2 / (2t): coarse scan, then golden-section
/// refinement one axis at a time.
inline double hopf_lax(const InitialData& g, double m, ConstSpan x, double t,
                       const HopfLaxOptions& opt = {}) {
  if (!g) throw Error(ErrorKind::config, "initial data is required");
  if (!(t > 0.0)) throw Error(ErrorKind::config, "Hopf-Lax formula needs t > 0");
  if (!(m > 0.0)) throw Error(ErrorKind::config, "mass must be positive");
  const std::size_t n = x.size();
  const double radius = opt.radius > 0.0 ? opt.radius : 4.0 * std::max(1.0, t / m);
  auto cost = [&](ConstSpan y) {
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) q += (x[i] - y[i]) * (x[i] - y[i]);
    const double gy = g(y);
    if (!std::isfinite(gy))
      throw Error(ErrorKind::config, "initial data is not finite", ErrorRecord{Vec(y.begin(), y.end()), 0.0});
    return gy + m * q / (2.0 * t);
  };

  // coarse scan on a tensor lattice; fewer points per axis in higher dimension
  std::size_t per_axis = opt.coarse_points;
  while (n > 1 && std::pow(static_cast<double>(per_axis), static_cast<double>(n)) > 2e5 &&
         per_axis > 11)
    per_axis = per_axis / 2 + 1;
  const double cell = 2.0 * radius / static_cast<double>(per_axis - 1);
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= per_axis;
  Vec best(x.begin(), x.end()), y(n);
  double best_cost = cost(best);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = x[i] - radius + cell * static_cast<double>(rem % per_axis);
      rem /= per_axis;
    }
    const double v = cost(y);
    if (v < best_cost) {
      best_cost = v;
      best = y;
    }
  }

  static const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (std::size_t sweep = 0; sweep < opt.sweeps; ++sweep) {
    for (std::size_t i = 0; i < n; ++i) {
      Vec probe = best;
      auto along = [&](double u) {
        probe[i] = u;
        return cost(probe);
      };
      double a = best[i] - cell, b = best[i] + cell;
      double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
      double fc = along(c), fd = along(d);
      for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, std::abs(best[i])); ++it) {
        if (fc < fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - inv_phi * (b - a);
          fc = along(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + inv_phi * (b - a);
          fd = along(d);
        }
      }
      const double u = 0.5 * (a + b);
      const double fu = along(u);
      if (fu < best_cost) {
        best_cost = fu;
        best[i] = u;
      }
    }
  }
  return best_cost;
}

/// Hopf-Lax value for a problem without potential or damping.
inline double hopf_lax(const HJProblem& problem, ConstSpan x, double t, const HopfLaxOptions& opt = {}) {
  const ForceModel& model = problem.model();
  if (model.potential || model.potential_gradient || model.nu != 0.0)
    throw Error(ErrorKind::not_applicable, "Hopf-Lax formula requires V = 0 and nu = 0");
  return hopf_lax(problem.initial(), model.mass, x, t, opt);
}

/// G = grad S / m with second-order differences (one-sided at open ends).
inline VectorField velocity_from_S(const ScalarField& field, double m) {
  if (!(m > 0.0)) throw Error(ErrorKind::config, "mass must be positive");
  const Grid& grid = field.grid;
  const std::size_t n = grid.dim();
  VectorField g(grid, n, field.time);
  for (std::size_t nd = 0; nd < grid.size(); ++nd)
    for (std::size_t d = 0; d < n; ++d)
      g.values[nd * n + d] = grid_partial(grid, field.values, nd, d) / m;
  return g;
}

/// dS/dt + |grad S|^2/(2m) + V + nu S at the middle of three slices.
inline ScalarField residual_hj(const ScalarField& prev, const ScalarField& mid,
                               const ScalarField& next, const ForceModel& model, double dt) {
  require_same_grid(prev.grid, mid.grid, "residual slices");
  require_same_grid(next.grid, mid.grid, "residual slices");
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
  const Grid& grid = mid.grid;
  if (grid.dim() != model.dim) throw Error(ErrorKind::grid_mismatch, "grid dimension differs from model");
  ScalarField out(grid, mid.time);
  for (std::size_t nd = 0; nd < grid.size(); ++nd) {
    double q = 0.0;
    for (std::size_t d = 0; d < grid.dim(); ++d) {
      const double p = grid_partial(grid, mid.values, nd, d);
      q += p * p;
    }
    out.values[nd] = (next.values[nd] - prev.values[nd]) / (2.0 * dt) + q / (2.0 * model.mass) +
                     model.V(grid.position(nd)) + model.nu * mid.values[nd];
  }
  return out;
}

}  // namespace hjreduce::hj
