#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hjreduce/core.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/rk4.hpp"

namespace hjreduce::action {

using ScalarOfState = std::function<double(ConstSpan c, double s, ConstSpan v)>;
using VectorOfState = std::function<void(ConstSpan c, double s, ConstSpan v, MutSpan out)>;

/// Lagrangian L(c, s, c') with optional closed-form derivatives. Matrices are
/// row-major n x n; d2L_dvdc(i, j) = d^2 L / dv_i dc_j. Missing derivatives
/// fall back to central differences.
struct LagrangianSpec {
  std::size_t dim = 1;
  ScalarOfState L;
  VectorOfState dL_dc;
  VectorOfState dL_dv;
  ScalarOfState dL_ds;
  VectorOfState d2L_dvdv;
  VectorOfState d2L_dvdc;
  VectorOfState d2L_dvds;
  bool velocity_hessian_spd = true;

  void validate() const {
    if (dim == 0) throw Error(ErrorKind::config, "Lagrangian dimension must be positive");
    if (!L) throw Error(ErrorKind::config, "Lagrangian function is required");
    if (!velocity_hessian_spd)
      throw Error(ErrorKind::config, "velocity Hessian must be positive definite for Legendre inversion");
  }
};

/// L = m |v|^2 / 2 - V(c) with closed-form derivatives.
inline LagrangianSpec mechanical_lagrangian(std::size_t dim, double mass,
                                            std::function<double(ConstSpan)> V = {},
                                            std::function<void(ConstSpan, MutSpan)> dV = {}) {
  if (!(mass > 0.0)) throw Error(ErrorKind::config, "mass must be positive");
  LagrangianSpec spec;
  spec.dim = dim;
  spec.L = [mass, V](ConstSpan c, double, ConstSpan v) {
    double k = 0.0;
    for (double x : v) k += x * x;
    return 0.5 * mass * k - (V ? V(c) : 0.0);
  };
  spec.dL_dc = [V, dV](ConstSpan c, double, ConstSpan, MutSpan out) {
    if (dV) {
      dV(c, out);
    } else if (V) {
      ForceModel tmp;
      tmp.dim = c.size();
      tmp.potential = V;
      potential_gradient(tmp, c, out);
    } else {
      std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    for (double& x : out) x = -x;
  };
  spec.dL_dv = [mass](ConstSpan, double, ConstSpan v, MutSpan out) {
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = mass * v[i];
  };
  spec.dL_ds = [](ConstSpan, double, ConstSpan) { return 0.0; };
  spec.d2L_dvdv = [mass](ConstSpan c, double, ConstSpan, MutSpan out) {
    const std::size_t n = c.size();
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = mass;
  };
  spec.d2L_dvdc = [](ConstSpan, double, ConstSpan, MutSpan out) { std::fill(out.begin(), out.end(), 0.0); };
  spec.d2L_dvds = [](ConstSpan, double, ConstSpan, MutSpan out) { std::fill(out.begin(), out.end(), 0.0); };
  return spec;
}

/// Lagrangian of a force model with only a potential: m |v|^2/2 - V.
inline LagrangianSpec lagrangian_of(const ForceModel& model) {
  if (model.nu != 0.0 || model.nongradient || model.velocity_potential)
    throw Error(ErrorKind::not_applicable, "only potential forces have a mechanical Lagrangian");
  ForceModel copy = model;
  std::function<void(ConstSpan, MutSpan)> grad;
  if (model.potential || model.potential_gradient)
    grad = [copy](ConstSpan x, MutSpan g) { potential_gradient(copy, x, g); };
  return mechanical_lagrangian(model.dim, model.mass, model.potential, grad);
}

// ---------------------------------------------------------------------------
// Derivatives with finite-difference fallback

namespace detail {

inline void fd_vector(const ScalarOfState& f, ConstSpan c, double s, ConstSpan v, bool wrt_v, MutSpan out) {
  Vec probe(wrt_v ? v.begin() : c.begin(), wrt_v ? v.end() : c.end());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double base = probe[i];
    const double h = fd_step(base);
    probe[i] = base + h;
    const double up = wrt_v ? f(c, s, probe) : f(probe, s, v);
    probe[i] = base - h;
    const double down = wrt_v ? f(c, s, probe) : f(probe, s, v);
    probe[i] = base;
    out[i] = (up - down) / (2.0 * h);
  }
}

}  // namespace detail

inline void dL_dc(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan v, MutSpan out) {
  if (spec.dL_dc) return spec.dL_dc(c, s, v, out);
  detail::fd_vector(spec.L, c, s, v, false, out);
}

inline void momentum(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan v, MutSpan out) {
  if (spec.dL_dv) return spec.dL_dv(c, s, v, out);
  detail::fd_vector(spec.L, c, s, v, true, out);
}

inline Vec momentum(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan v) {
  Vec p(spec.dim);
  momentum(spec, c, s, v, p);
  return p;
}

inline double dL_ds(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan v) {
  if (spec.dL_ds) return spec.dL_ds(c, s, v);
  const double h = fd_step(s);
  return (spec.L(c, s + h, v) - spec.L(c, s - h, v)) / (2.0 * h);
}

namespace detail {

/// Mixed second derivatives of L: rows d/dv_i, columns by `wrt` (0: v, 1: c, 2: s).
inline void second(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan v, int wrt, MutSpan out) {
  const std::size_t n = spec.dim;
  const std::size_t cols = wrt == 2 ? 1 : n;
  Vec pc(c.begin(), c.end()), pv(v.begin(), v.end()), up(n), down(n);
  auto p_at = [&](ConstSpan cc, double ss, ConstSpan vv, MutSpan o) {
    if (spec.dL_dv) return spec.dL_dv(cc, ss, vv, o);
    // both levels numerical: a wider step keeps truncation and roundoff balanced
    Vec probe(vv.begin(), vv.end());
    for (std::size_t i = 0; i < n; ++i) {
      const double h = std::pow(std::numeric_limits<double>::epsilon(), 0.25) * std::max(1.0, std::abs(vv[i]));
      probe[i] = vv[i] + h;
      const double a = spec.L(cc, ss, probe);
      probe[i] = vv[i] - h;
      const double b = spec.L(cc, ss, probe);
      probe[i] = vv[i];
      o[i] = (a - b) / (2.0 * h);
    }
  };
  for (std::size_t j = 0; j < cols; ++j) {
    double base = wrt == 0 ? v[j] : wrt == 1 ? c[j] : s;
    const double h = spec.dL_dv ? fd_step(base)
                                : std::pow(std::numeric_limits<double>::epsilon(), 0.25) * std::max(1.0, std::abs(base));
    if (wrt == 0) {
      pv[j] = base + h; p_at(c, s, pv, up);
      pv[j] = base - h; p_at(c, s, pv, down);
      pv[j] = base;
    } else if (wrt == 1) {
      pc[j] = base + h; p_at(pc, s, v, up);
      pc[j] = base - h; p_at(pc, s, v, down);
      pc[j] = base;
    } else {
      p_at(c, s + h, v, up);
      p_at(c, s - h, v, down);
    }
    for (std::size_t i = 0; i < n; ++i) out[i * cols + j] = (up[i] - down[i]) / (2.0 * h);
  }
}

}  // namespace detail

inline void velocity_hessian(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan v, MutSpan out) {
  if (spec.d2L_dvdv) return spec.d2L_dvdv(c, s, v, out);
  detail::second(spec, c, s, v, 0, out);
}

/// Euler-Lagrange acceleration a = H^{-1} (dL/dc - (d2L/dv dc) v - d2L/dv ds).
inline void el_acceleration(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan v, MutSpan a) {
  const std::size_t n = spec.dim;
  Vec hvv(n * n), hvc(n * n), hvs(n), g(n);
  velocity_hessian(spec, c, s, v, hvv);
  if (spec.d2L_dvdc) spec.d2L_dvdc(c, s, v, hvc); else detail::second(spec, c, s, v, 1, hvc);
  if (spec.d2L_dvds) spec.d2L_dvds(c, s, v, hvs); else detail::second(spec, c, s, v, 2, hvs);
  dL_dc(spec, c, s, v, g);
  if (n == 1) {
    a[0] = (g[0] - hvc[0] * v[0] - hvs[0]) / hvv[0];
    return;
  }
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = g[i] - hvs[i];
    for (std::size_t j = 0; j < n; ++j) {
      H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = hvv[i * n + j];
      acc -= hvc[i * n + j] * v[j];
    }
    r(static_cast<Eigen::Index>(i)) = acc;
  }
  const Eigen::VectorXd x = H.llt().solve(r);
  for (std::size_t i = 0; i < n; ++i) a[i] = x(static_cast<Eigen::Index>(i));
}

/// Velocity v with dL/dv(c, s, v) = p, by Newton on the SPD velocity Hessian.
inline Vec legendre_velocity(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan p,
                             std::optional<Vec> guess = std::nullopt) {
  const std::size_t n = spec.dim;
  Vec v = guess ? *guess : Vec(n, 0.0);
  Vec q(n), hvv(n * n);
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd r(n);
  for (int it = 0; it < 100; ++it) {
    momentum(spec, c, s, v, q);
    double err = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      r(static_cast<Eigen::Index>(i)) = p[i] - q[i];
      err = std::max(err, std::abs(p[i] - q[i]));
      scale = std::max(scale, std::abs(p[i]));
    }
    if (err <= 1e-14 * scale) return v;
    velocity_hessian(spec, c, s, v, hvv);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = hvv[i * n + j];
    const Eigen::VectorXd dv = H.llt().solve(r);
    for (std::size_t i = 0; i < n; ++i) v[i] += dv(static_cast<Eigen::Index>(i));
    if (!all_finite(v)) break;
  }
  momentum(spec, c, s, v, q);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(p[i] - q[i]));
  if (!(err <= 1e-9 * std::max(1.0, norm2(p))))
    throw Error(ErrorKind::no_convergence, "Legendre inversion did not converge",
                ErrorRecord{Vec(c.begin(), c.end()), s});
  return v;
}

/// H(c, s, p) = p . v - L at the stationary velocity (the maximum of p.v - L
/// for velocity-convex L).
inline double hamiltonian(const LagrangianSpec& spec, ConstSpan c, double s, ConstSpan p,
                          std::optional<Vec> guess = std::nullopt) {
  const Vec v = legendre_velocity(spec, c, s, p, std::move(guess));
  return dot(p, v) - spec.L(c, s, v);
}

// ---------------------------------------------------------------------------
// Extremals

struct Extremal {
  Trajectory path;
  Vec x0, x1;
  double t0 = 0.0, t1 = 0.0;
  double action_value = 0.0;
  Vec initial_velocity;
  std::size_t steps = 0;
  std::size_t iterations = 0;
  double endpoint_residual = 0.0;
  /// Smallest singular value of the shooting Jacobian at the solution.
  double jacobian_sigma_min = 0.0;
};

struct ShootOptions {
  /// Uniform step target; the count is rounded up to an even number.
  double dt = 1e-3;
  /// Explicit step count (even); overrides dt when non-zero.
  std::size_t steps = 0;
  std::size_t max_iterations = 100;
  double tolerance = 1e-10;
  /// Relative singular-value threshold for a conjugate point.
  double conjugate_tolerance = 1e-8;
  std::optional<Vec> initial_velocity;
};

namespace detail {

inline std::size_t even_steps(double span, const ShootOptions& opt) {
  if (opt.steps) {
    if (opt.steps % 2) throw Error(ErrorKind::config, "step count must be even");
    return opt.steps;
  }
  if (!(opt.dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
  std::size_t n = step_count(0.0, span, opt.dt);
  if (n % 2) ++n;
  return std::max<std::size_t>(n, 2);
}

/// Integrates the Euler-Lagrange flow with N uniform RK4 steps.
inline Trajectory el_flow(const LagrangianSpec& spec, ConstSpan x0, ConstSpan v0, double t0, double t1,
                          std::size_t steps) {
  const std::size_t n = spec.dim;
  Vec y(2 * n);
  std::copy(x0.begin(), x0.end(), y.begin());
  std::copy(v0.begin(), v0.end(), y.begin() + static_cast<std::ptrdiff_t>(n));
  auto rhs = [&](double s, ConstSpan st, MutSpan dy) {
    std::copy(st.begin() + static_cast<std::ptrdiff_t>(n), st.end(), dy.begin());
    el_acceleration(spec, st.subspan(0, n), s, st.subspan(n, n), dy.subspan(n, n));
  };
  Rk4 rk(2 * n);
  Trajectory traj;
  const double h = (t1 - t0) / static_cast<double>(steps);
  traj.push(t0, ConstSpan(y).subspan(0, n), ConstSpan(y).subspan(n, n));
  for (std::size_t k = 0; k < steps; ++k) {
    const double s = t0 + static_cast<double>(k) * h;
    rk.step(rhs, s, y, h);
    const double sn = k + 1 == steps ? t1 : t0 + static_cast<double>(k + 1) * h;
    if (!all_finite(y))
      throw Error(ErrorKind::divergence, "extremal integration diverged",
                  ErrorRecord{Vec(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n)), sn});
    traj.push(sn, ConstSpan(y).subspan(0, n), ConstSpan(y).subspan(n, n));
  }
  return traj;
}

/// Composite Simpson rule of L along uniformly sampled path data.
inline double simpson_action(const LagrangianSpec& spec, const Trajectory& path) {
  const std::size_t steps = path.size() - 1;
  const double h = (path.times.back() - path.times.front()) / static_cast<double>(steps);
  double sum = 0.0;
  for (std::size_t k = 0; k <= steps; ++k) {
    const double w = (k == 0 || k == steps) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    sum += w * spec.L(path.positions[k], path.times[k], path.velocities[k]);
  }
  return sum * h / 3.0;
}

}  // namespace detail

/// Shooting solve of the two-point problem (x0, t0) -> (x1, t1).
inline Extremal solve_extremal(const LagrangianSpec& spec, ConstSpan x0, double t0, ConstSpan x1,
                               double t1, const ShootOptions& opt = {}) {
  spec.validate();
  const std::size_t n = spec.dim;
  if (x0.size() != n || x1.size() != n) throw Error(ErrorKind::config, "endpoint dimension mismatch");
  if (!(t1 > t0)) throw Error(ErrorKind::config, "extremal needs t1 > t0");
  const double T = t1 - t0;
  const std::size_t steps = detail::even_steps(T, opt);

  Vec v(n);
  if (opt.initial_velocity) {
    if (opt.initial_velocity->size() != n) throw Error(ErrorKind::config, "seed velocity dimension mismatch");
    v = *opt.initial_velocity;
  } else {
    for (std::size_t i = 0; i < n; ++i) v[i] = (x1[i] - x0[i]) / T;
  }

  auto endpoint = [&](const Vec& vel, Vec& r) {
    const Trajectory tr = detail::el_flow(spec, x0, vel, t0, t1, steps);
    for (std::size_t i = 0; i < n; ++i) r[i] = tr.positions.back()[i] - x1[i];
    return tr;
  };
  auto jacobian = [&](const Vec& vel, const Vec& r0) {
    Eigen::MatrixXd J(n, n);
    Vec probe = vel, r(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double eta = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(vel[j]));
      probe[j] = vel[j] + eta;
      endpoint(probe, r);
      probe[j] = vel[j];
      for (std::size_t i = 0; i < n; ++i)
        J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (r[i] - r0[i]) / eta;
    }
    return J;
  };
  // free flight has Jacobian T I, which sets the scale for singularity
  auto sigma_min_rel = [&](const Eigen::MatrixXd& J, double& sigma) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    sigma = svd.singularValues().minCoeff();
    return sigma / std::max(T, svd.singularValues().maxCoeff());
  };

  Vec r(n), rt(n);
  Trajectory path = endpoint(v, r);
  double rn = norm2(r);
  double best = rn;
  std::size_t it = 0;
  for (; it < opt.max_iterations && rn > opt.tolerance; ++it) {
    const Eigen::MatrixXd J = jacobian(v, r);
    double sigma;
    if (sigma_min_rel(J, sigma) < opt.conjugate_tolerance)
      throw Error(ErrorKind::conjugate_point, "shooting Jacobian is singular (conjugate point)",
                  ErrorRecord{Vec(x1.begin(), x1.end()), t1, sigma});
    Eigen::VectorXd rhs(n);
    for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i)) = -r[i];
    const Eigen::VectorXd dv = J.colPivHouseholderQr().solve(rhs);
    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      Vec trial = v;
      for (std::size_t i = 0; i < n; ++i) trial[i] += lambda * dv(static_cast<Eigen::Index>(i));
      Trajectory tp;
      try {
        tp = endpoint(trial, rt);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::divergence) throw;
        lambda *= 0.5;
        continue;
      }
      const double tn = norm2(rt);
      if (tn < rn) {
        v = std::move(trial);
        r = rt;
        rn = tn;
        path = std::move(tp);
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    best = std::min(best, rn);
    if (!accepted) break;
  }
  if (!(rn <= opt.tolerance))
    throw Error(ErrorKind::no_convergence,
                "shooting did not converge (best residual " + std::to_string(best) + ")",
                ErrorRecord{Vec(x1.begin(), x1.end()), t1});

  Extremal ex;
  ex.jacobian_sigma_min = 0.0;
  {
    const Eigen::MatrixXd J = jacobian(v, r);
    double sigma;
    if (sigma_min_rel(J, sigma) < opt.conjugate_tolerance)
      throw Error(ErrorKind::conjugate_point, "endpoint map is degenerate (conjugate point)",
                  ErrorRecord{Vec(x1.begin(), x1.end()), t1, sigma});
    ex.jacobian_sigma_min = sigma;
  }
  ex.x0.assign(x0.begin(), x0.end());
  ex.x1.assign(x1.begin(), x1.end());
  ex.t0 = t0;
  ex.t1 = t1;
  ex.initial_velocity = v;
  ex.steps = steps;
  ex.iterations = it;
  ex.endpoint_residual = rn;
  ex.action_value = detail::simpson_action(spec, path);
  ex.path = std::move(path);
  return ex;
}

/// Action of arbitrary uniformly sampled path data (Simpson; even step count).
inline double action_of(const LagrangianSpec& spec, const Trajectory& path) {
  if (path.size() < 3 || (path.size() - 1) % 2)
    throw Error(ErrorKind::config, "Simpson action needs an even number of uniform steps");
  return detail::simpson_action(spec, path);
}

/// Largest |d/ds dL/dv - dL/dc| over samples with a full fourth-order stencil.
inline double el_residual(const LagrangianSpec& spec, const Trajectory& path, Vec* series = nullptr) {
  const std::size_t n = spec.dim;
  const std::size_t count = path.size();
  if (count < 5) throw Error(ErrorKind::config, "Euler-Lagrange residual needs at least 5 samples");
  const double h = (path.times.back() - path.times.front()) / static_cast<double>(count - 1);
  std::vector<Vec> p(count, Vec(n));
  for (std::size_t k = 0; k < count; ++k)
    momentum(spec, path.positions[k], path.times[k], path.velocities[k], p[k]);
  Vec g(n);
  double worst = 0.0;
  if (series) series->assign(count, std::nan(""));
  for (std::size_t k = 2; k + 2 < count; ++k) {
    dL_dc(spec, path.positions[k], path.times[k], path.velocities[k], g);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dp = (-p[k + 2][i] + 8.0 * p[k + 1][i] - 8.0 * p[k - 1][i] + p[k - 2][i]) / (12.0 * h);
      sq += (dp - g[i]) * (dp - g[i]);
    }
    const double r = std::sqrt(sq);
    if (series) (*series)[k] = r;
    worst = std::max(worst, r);
  }
  return worst;
}

struct HamiltonianSample {
  double t;
  double H;
  /// dH/dt + dL/ds by fourth-order differences; NaN near the ends.
  double identity_residual;
};

inline std::vector<HamiltonianSample> hamiltonian_drift(const LagrangianSpec& spec, const Extremal& ex) {
  const Trajectory& path = ex.path;
  const std::size_t count = path.size();
  Vec H(count);
  Vec p(spec.dim);
  for (std::size_t k = 0; k < count; ++k) {
    momentum(spec, path.positions[k], path.times[k], path.velocities[k], p);
    H[k] = dot(p, path.velocities[k]) - spec.L(path.positions[k], path.times[k], path.velocities[k]);
  }
  const double h = (path.times.back() - path.times.front()) / static_cast<double>(count - 1);
  std::vector<HamiltonianSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    double res = std::nan("");
    if (k >= 2 && k + 2 < count) {
      const double dH = (-H[k + 2] + 8.0 * H[k + 1] - 8.0 * H[k - 1] + H[k - 2]) / (12.0 * h);
      res = dH + dL_ds(spec, path.positions[k], path.times[k], path.velocities[k]);
    }
    out.push_back({path.times[k], H[k], res});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variations

struct EndpointVariation {
  double measured;
  /// p . dx + (L - p . v) dt at the arriving endpoint.
  double predicted;
};

/// Directional derivative of the action under an endpoint move (dx, dt),
/// measured by re-shooting at +-delta with the step count held fixed.
inline EndpointVariation endpoint_variation(const LagrangianSpec& spec, const Extremal& ex, ConstSpan dx,
                                            double dt, double delta_scale = 1.0) {
  const std::size_t n = spec.dim;
  const double delta = 1e-5 * delta_scale;
  ShootOptions opt;
  opt.steps = ex.steps;
  opt.initial_velocity = ex.initial_velocity;
  auto shoot = [&](double sign) {
    Vec x1 = ex.x1;
    for (std::size_t i = 0; i < n; ++i) x1[i] += sign * delta * dx[i];
    return solve_extremal(spec, ex.x0, ex.t0, x1, ex.t1 + sign * delta * dt, opt).action_value;
  };
  const double measured = (shoot(1.0) - shoot(-1.0)) / (2.0 * delta);
  const Vec& c = ex.path.positions.back();
  const Vec& v = ex.path.velocities.back();
  const Vec p = momentum(spec, c, ex.t1, v);
  const double L = spec.L(c, ex.t1, v);
  return {measured, dot(p, dx) + (L - dot(p, v)) * dt};
}

/// Action change when the extremal is displaced by epsilon times a sin^2
/// bump (vanishing at both ends) along `direction`.
inline double interior_variation(const LagrangianSpec& spec, const Extremal& ex, double epsilon,
                                 ConstSpan direction) {
  Trajectory bent = ex.path;
  const double T = ex.t1 - ex.t0;
  for (std::size_t k = 0; k < bent.size(); ++k) {
    const double u = std::numbers::pi * (bent.times[k] - ex.t0) / T;
    const double bump = std::sin(u) * std::sin(u);
    const double dbump = 2.0 * std::sin(u) * std::cos(u) * std::numbers::pi / T;
    for (std::size_t i = 0; i < spec.dim; ++i) {
      bent.positions[k][i] += epsilon * bump * direction[i];
      bent.velocities[k][i] += epsilon * dbump * direction[i];
    }
  }
  return action_of(spec, bent) - ex.action_value;
}

// ---------------------------------------------------------------------------
// Sheets

struct SheetOptions {
  ShootOptions shoot;
  int branch = 0;
  /// Initial velocity for the first shoot of the sweep.
  std::optional<Vec> seed_velocity;
};

/// S and arriving velocity over an endpoint lattice (times x positions),
/// filled by a row-major continuation sweep.
struct Sheet {
  Grid positions;
  Vec times;
  int branch = 0;
  /// Row-major [time][node].
  Vec S;
  /// Row-major [time][node][component].
  Vec velocity;
  std::vector<char> converged;
  std::vector<char> smooth;
  /// Row index where the sweep stopped, or times.size() if complete.
  std::size_t truncated_row = 0;
  std::string truncation_reason;

  std::size_t index(std::size_t row, std::size_t node) const { return row * positions.size() + node; }
};

inline Sheet build_sheet(const LagrangianSpec& spec, ConstSpan x0, double t0, const Grid& endpoints,
                         Vec times, const SheetOptions& opt = {}) {
  spec.validate();
  const std::size_t n = spec.dim;
  if (endpoints.dim() != n) throw Error(ErrorKind::grid_mismatch, "endpoint grid dimension differs from Lagrangian");
  if (times.empty()) throw Error(ErrorKind::config, "sheet needs at least one time");
  std::sort(times.begin(), times.end());
  if (!(times.front() > t0)) throw Error(ErrorKind::config, "sheet times must exceed t0");

  Sheet sh;
  sh.positions = endpoints;
  sh.times = times;
  sh.branch = opt.branch;
  const std::size_t nodes = endpoints.size();
  const std::size_t total = nodes * times.size();
  sh.S.assign(total, std::nan(""));
  sh.velocity.assign(total * n, std::nan(""));
  sh.converged.assign(total, 0);
  sh.smooth.assign(total, 0);
  sh.truncated_row = times.size();

  std::vector<Vec> seeds(total);
  for (std::size_t row = 0; row < times.size() && sh.truncated_row == times.size(); ++row) {
    for (std::size_t nd = 0; nd < nodes; ++nd) {
      const std::size_t id = sh.index(row, nd);
      ShootOptions so = opt.shoot;
      // continuation: previous node in this row, else same node one row earlier
      if (nd > 0 && sh.converged[id - 1])
        so.initial_velocity = seeds[id - 1];
      else if (row > 0 && sh.converged[sh.index(row - 1, nd)])
        so.initial_velocity = seeds[sh.index(row - 1, nd)];
      else if (opt.seed_velocity)
        so.initial_velocity = opt.seed_velocity;
      const Vec x1 = endpoints.position(nd);
      try {
        const Extremal ex = solve_extremal(spec, x0, t0, x1, times[row], so);
        seeds[id] = ex.initial_velocity;
        sh.S[id] = ex.action_value;
        for (std::size_t i = 0; i < n; ++i) sh.velocity[id * n + i] = ex.path.velocities.back()[i];
        sh.converged[id] = 1;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::conjugate_point && e.kind() != ErrorKind::no_convergence &&
            e.kind() != ErrorKind::divergence)
          throw;
        sh.truncated_row = row;
        sh.truncation_reason = std::string(to_string(e.kind())) + " at t=" + std::to_string(times[row]);
        break;
      }
    }
  }
  // smooth: converged with every lattice neighbour converged
  for (std::size_t row = 0; row < times.size(); ++row)
    for (std::size_t nd = 0; nd < nodes; ++nd) {
      const std::size_t id = sh.index(row, nd);
      if (!sh.converged[id]) continue;
      bool ok = true;
      if (row > 0 && !sh.converged[sh.index(row - 1, nd)]) ok = false;
      if (row + 1 < times.size() && !sh.converged[sh.index(row + 1, nd)]) ok = false;
      for (std::size_t d = 0; d < n && ok; ++d) {
        const std::size_t i = endpoints.index_along(nd, d);
        const std::size_t st = endpoints.stride(d);
        if (i > 0 && !sh.converged[id - st]) ok = false;
        if (i + 1 < endpoints.axis(d).points && !sh.converged[id + st]) ok = false;
      }
      sh.smooth[id] = ok ? 1 : 0;
    }
  return sh;
}

struct SheetResidual {
  /// Row-major [time][node]; NaN where the stencil is incomplete or masked.
  Vec values;
  double max = 0.0;
  std::size_t evaluated = 0;
};

/// dS/dt + H(x, t, dS/dx) on interior sheet nodes by central differences.
inline SheetResidual hj_residual_of_sheet(const LagrangianSpec& spec, const Sheet& sh) {
  const std::size_t n = spec.dim;
  const Grid& g = sh.positions;
  const std::size_t nodes = g.size();
  SheetResidual out;
  out.values.assign(sh.S.size(), std::nan(""));
  for (std::size_t row = 1; row + 1 < sh.times.size(); ++row) {
    const double dt = sh.times[row + 1] - sh.times[row - 1];
    for (std::size_t nd = 0; nd < nodes; ++nd) {
      const std::size_t id = sh.index(row, nd);
      if (!sh.smooth[id] || !is_interior(g, nd)) continue;
      bool ok = sh.smooth[sh.index(row - 1, nd)] && sh.smooth[sh.index(row + 1, nd)];
      Vec p(n);
      for (std::size_t d = 0; d < n && ok; ++d) {
        const std::size_t st = g.stride(d);
        if (!sh.smooth[id - st] || !sh.smooth[id + st]) ok = false;
        p[d] = (sh.S[id + st] - sh.S[id - st]) / (2.0 * g.spacing(d));
      }
      if (!ok) continue;
      const double st = (sh.S[sh.index(row + 1, nd)] - sh.S[sh.index(row - 1, nd)]) / dt;
      const Vec x = g.position(nd);
      Vec guess(sh.velocity.begin() + static_cast<std::ptrdiff_t>(id * n),
                sh.velocity.begin() + static_cast<std::ptrdiff_t>((id + 1) * n));
      const double r = st + hamiltonian(spec, x, sh.times[row], p, guess);
      out.values[id] = r;
      out.max = std::max(out.max, std::abs(r));
      ++out.evaluated;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Converse check

/// An action function S(x, t) with its spatial gradient.
struct ActionProvider {
  std::function<double(ConstSpan x, double t)> value;
  std::function<void(ConstSpan x, double t, MutSpan grad)> gradient;
};

struct ConverseReport {
  Trajectory path;
  double el_residual = 0.0;
  Vec residual_series;
};

/// Integrates x' = V(x, t) with dL/dv(x, t, V) = grad S and measures the
/// Euler-Lagrange residual along the resulting path.
inline ConverseReport converse_check(const LagrangianSpec& spec, const ActionProvider& S, ConstSpan x_start,
                                     double t_start, double t_end, double dt,
                                     const std::function<bool(ConstSpan, double)>& inside = {}) {
  spec.validate();
  if (!S.gradient) throw Error(ErrorKind::config, "action provider needs a gradient");
  const std::size_t n = spec.dim;
  Vec guess(n, 0.0);
  auto velocity = [&](ConstSpan x, double t, MutSpan out) {
    if (inside && !inside(x, t))
      throw Error(ErrorKind::domain_exit, "path left the action provider's domain",
                  ErrorRecord{Vec(x.begin(), x.end()), t});
    Vec p(n);
    S.gradient(x, t, p);
    const Vec v = legendre_velocity(spec, x, t, p, guess);
    std::copy(v.begin(), v.end(), out.begin());
  };
  // uniform steps so the fourth-order stencil applies
  ShootOptions so;
  so.dt = dt;
  const std::size_t steps = detail::even_steps(t_end - t_start, so);
  const double h = (t_end - t_start) / static_cast<double>(steps);
  Vec y(x_start.begin(), x_start.end()), v(n);
  auto rhs = [&](double t, ConstSpan x, MutSpan dx) { velocity(x, t, dx); };
  Rk4 rk(n);
  ConverseReport rep;
  velocity(y, t_start, v);
  rep.path.push(t_start, y, v);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = t_start + static_cast<double>(k) * h;
    rk.step(rhs, t, y, h);
    const double tn = k + 1 == steps ? t_end : t_start + static_cast<double>(k + 1) * h;
    velocity(y, tn, v);
    rep.path.push(tn, y, v);
  }
  rep.el_residual = el_residual(spec, rep.path, &rep.residual_series);
  return rep;
}

}  // namespace hjreduce::action
