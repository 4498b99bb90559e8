#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hjreduce/core.hpp"

namespace hjreduce {

using PotentialFn = std::function<double(ConstSpan x)>;
using PotentialGradientFn = std::function<void(ConstSpan x, MutSpan grad)>;
using VelocityPotentialFn = std::function<double(ConstSpan x, ConstSpan v, double t)>;
/// Callable as f(x, v, t, out); writes a velocity-shaped array.
using StateVectorFn = std::function<void(ConstSpan x, ConstSpan v, double t, MutSpan out)>;

/// Force split f = -(1/m) dV/dx - (1/m) d1x Ftilde + D - nu v.
///
/// Empty callables mean "identically zero". Closed-form gradients are
/// optional; central differences are used when they are absent.
struct ForceModel {
  std::size_t dim = 1;
  double mass = 1.0;
  double nu = 0.0;

  PotentialFn potential;
  PotentialGradientFn potential_gradient;

  VelocityPotentialFn velocity_potential;
  /// Partial x-gradient of Ftilde with the velocity argument held fixed.
  StateVectorFn velocity_potential_gradient;
  /// Ftilde of the form F^v(v, t): its x-gradient vanishes identically.
  bool velocity_potential_uncoupled = false;

  StateVectorFn nongradient;

  void validate() const {
    if (dim == 0) throw Error(ErrorKind::config, "force model dimension must be positive");
    if (!(mass > 0.0) || !std::isfinite(mass))
      throw Error(ErrorKind::config, "mass must be positive");
    if (!(nu >= 0.0) || !std::isfinite(nu))
      throw Error(ErrorKind::config, "damping coefficient must be non-negative");
  }

  double V(ConstSpan x) const { return potential ? potential(x) : 0.0; }
};

/// Step used for central differences of user-supplied potentials.
inline double fd_step(double x) {
  static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  return base * std::max(1.0, std::abs(x));
}

inline void potential_gradient(const ForceModel& model, ConstSpan x, MutSpan grad) {
  if (model.potential_gradient) {
    model.potential_gradient(x, grad);
    return;
  }
  if (!model.potential) {
    std::fill(grad.begin(), grad.end(), 0.0);
    return;
  }
  Vec probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i]);
    probe[i] = x[i] + h;
    const double up = model.potential(probe);
    probe[i] = x[i] - h;
    const double down = model.potential(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
}

/// d1x Ftilde(x, v, t): x-derivative with the velocity slot frozen.
inline void velocity_potential_gradient(const ForceModel& model, ConstSpan x, ConstSpan v, double t,
                                        MutSpan grad) {
  if (model.velocity_potential_gradient) {
    model.velocity_potential_gradient(x, v, t, grad);
    return;
  }
  if (!model.velocity_potential || model.velocity_potential_uncoupled) {
    std::fill(grad.begin(), grad.end(), 0.0);
    return;
  }
  Vec probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i]);
    probe[i] = x[i] + h;
    const double up = model.velocity_potential(probe, v, t);
    probe[i] = x[i] - h;
    const double down = model.velocity_potential(probe, v, t);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
}

inline void total_force(const ForceModel& model, ConstSpan x, ConstSpan v, double t, MutSpan out) {
  const std::size_t n = model.dim;
  thread_local Vec scratch;
  scratch.assign(n, 0.0);
  potential_gradient(model, x, out);
  for (std::size_t i = 0; i < n; ++i) out[i] = -out[i] / model.mass;
  if (model.velocity_potential || model.velocity_potential_gradient) {
    velocity_potential_gradient(model, x, v, t, scratch);
    for (std::size_t i = 0; i < n; ++i) out[i] -= scratch[i] / model.mass;
  }
  if (model.nongradient) {
    model.nongradient(x, v, t, scratch);
    for (std::size_t i = 0; i < n; ++i) out[i] += scratch[i];
  }
  if (model.nu != 0.0)
    for (std::size_t i = 0; i < n; ++i) out[i] -= model.nu * v[i];
  if (!all_finite(ConstSpan(out.data(), n))) {
    ErrorRecord rec{Vec(x.begin(), x.end()), t};
    throw Error(ErrorKind::divergence, "force evaluation is not finite", rec);
  }
}

inline Vec total_force(const ForceModel& model, ConstSpan x, ConstSpan v, double t) {
  Vec out(model.dim);
  total_force(model, x, v, t, out);
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios

/// Closed-form companions of a scenario, tied to its canonical initial
/// datum S(x, 0) = initial(x). Any member may be empty.
struct ScenarioReference {
  std::function<double(ConstSpan x)> initial;
  std::function<double(ConstSpan x, double t)> action;
  std::function<Vec(ConstSpan x, double t)> velocity;
  /// (position, velocity) at time t of the Newton trajectory from (x0, v0).
  std::function<std::pair<Vec, Vec>(ConstSpan x0, ConstSpan v0, double t)> trajectory;
};

struct Scenario {
  std::string name;
  ForceModel model;
  ScenarioReference reference;
};

struct ScenarioOverrides {
  std::optional<std::size_t> dim{};
  std::optional<double> mass{};
  std::optional<double> nu{};
};

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"free",           "damped_free", "harmonic",
                                                 "damped_harmonic", "curl2d",      "projector2d"};
  return names;
}

namespace detail {

inline double half_square(ConstSpan x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return 0.5 * s;
}

/// Coefficient b(t) in S = b(t) |x|^2 for V = 0, S(x,0) = |x|^2/2:
/// b' + 2 b^2 / m + nu b = 0, b(0) = 1/2.
inline double riccati_coefficient(double t, double m, double nu) {
  if (nu == 0.0) return 1.0 / (2.0 + 2.0 * t / m);
  const double c = 2.0 / (m * nu);
  return 1.0 / (-c + (2.0 + c) * std::exp(nu * t));
}

/// Scalar solution of y'' + nu y' + w2 y = 0 with y(0)=y0, y'(0)=v0 (any damping regime).
inline std::pair<double, double> damped_oscillator(double y0, double v0, double t, double nu,
                                                   double w2) {
  const double g = 0.5 * nu;
  const double disc = w2 - g * g;
  const double e = std::exp(-g * t);
  if (disc > 0) {
    const double w = std::sqrt(disc);
    const double c = std::cos(w * t), s = std::sin(w * t);
    const double b = (v0 + g * y0) / w;
    const double y = e * (y0 * c + b * s);
    const double dy = -g * y + e * (-y0 * w * s + b * w * c);
    return {y, dy};
  }
  if (disc < 0) {
    const double w = std::sqrt(-disc);
    const double c = std::cosh(w * t), s = std::sinh(w * t);
    const double b = (v0 + g * y0) / w;
    const double y = e * (y0 * c + b * s);
    const double dy = -g * y + e * (y0 * w * s + b * w * c);
    return {y, dy};
  }
  const double b = v0 + g * y0;
  const double y = e * (y0 + b * t);
  const double dy = -g * y + e * b;
  return {y, dy};
}

}  // namespace detail

/// Builds a named scenario. Unknown names raise a configuration error.
inline Scenario make_scenario(std::string_view name, const ScenarioOverrides& overrides = {}) {
  Scenario sc;
  sc.name = std::string(name);
  ForceModel& m = sc.model;
  auto apply = [&](std::size_t dim, double nu) {
    m.dim = overrides.dim.value_or(dim);
    m.mass = overrides.mass.value_or(1.0);
    m.nu = overrides.nu.value_or(nu);
  };

  if (name == "free" || name == "damped_free") {
    apply(1, name == "free" ? 0.0 : 1.0);
    m.validate();
    const double mass = m.mass, nu = m.nu;
    if (nu == 0.0) {
      // canonical datum S(x,0) = sum x_i: uniform unit momentum per axis
      sc.reference.initial = [](ConstSpan x) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
      };
      sc.reference.action = [mass](ConstSpan x, double t) {
        double s = 0.0;
        for (double v : x) s += v;
        return s - static_cast<double>(x.size()) * t / (2.0 * mass);
      };
      sc.reference.velocity = [mass](ConstSpan x, double) { return Vec(x.size(), 1.0 / mass); };
    } else {
      sc.reference.initial = [](ConstSpan x) { return detail::half_square(x); };
      sc.reference.action = [mass, nu](ConstSpan x, double t) {
        return detail::riccati_coefficient(t, mass, nu) * 2.0 * detail::half_square(x);
      };
      sc.reference.velocity = [mass, nu](ConstSpan x, double t) {
        const double b = detail::riccati_coefficient(t, mass, nu);
        Vec g(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * b * x[i] / mass;
        return g;
      };
    }
    sc.reference.trajectory = [nu](ConstSpan x0, ConstSpan v0, double t) {
      Vec x(x0.size()), v(x0.size());
      const double decay = nu == 0.0 ? t : (1.0 - std::exp(-nu * t)) / nu;
      for (std::size_t i = 0; i < x0.size(); ++i) {
        x[i] = x0[i] + v0[i] * decay;
        v[i] = v0[i] * std::exp(-nu * t);
      }
      return std::make_pair(x, v);
    };
    return sc;
  }

  if (name == "harmonic" || name == "damped_harmonic") {
    apply(1, name == "harmonic" ? 0.0 : 0.5);
    m.validate();
    m.potential = [](ConstSpan x) { return detail::half_square(x); };
    m.potential_gradient = [](ConstSpan x, MutSpan g) { std::copy(x.begin(), x.end(), g.begin()); };
    const double mass = m.mass, nu = m.nu;
    const double w2 = 1.0 / mass;
    sc.reference.trajectory = [nu, w2](ConstSpan x0, ConstSpan v0, double t) {
      Vec x(x0.size()), v(x0.size());
      for (std::size_t i = 0; i < x0.size(); ++i) {
        auto [y, dy] = detail::damped_oscillator(x0[i], v0[i], t, nu, w2);
        x[i] = y;
        v[i] = dy;
      }
      return std::make_pair(x, v);
    };
    // canonical datum S(x,0) = 0: the flow map is x0 * phi(t), so G = x phi'/phi
    sc.reference.initial = [](ConstSpan) { return 0.0; };
    auto ratio = [nu, w2](double t) {
      auto [phi, dphi] = detail::damped_oscillator(1.0, 0.0, t, nu, w2);
      return dphi / phi;
    };
    sc.reference.action = [mass, ratio](ConstSpan x, double t) {
      return mass * ratio(t) * detail::half_square(x);
    };
    sc.reference.velocity = [ratio](ConstSpan x, double t) {
      Vec g(x.begin(), x.end());
      const double r = ratio(t);
      for (double& v : g) v *= r;
      return g;
    };
    return sc;
  }

  if (name == "curl2d") {
    apply(2, 0.0);
    if (m.dim != 2) throw Error(ErrorKind::config, "curl2d is two-dimensional");
    m.validate();
    m.nongradient = [](ConstSpan x, ConstSpan, double, MutSpan out) {
      out[0] = x[1];
      out[1] = -x[0];
    };
    return sc;
  }

  if (name == "projector2d") {
    apply(2, 0.0);
    if (m.dim != 2) throw Error(ErrorKind::config, "projector2d is two-dimensional");
    m.validate();
    // Ftilde = x . (I - vhat vhat) A with A = (1, 0); zero at v = 0 by convention.
    static constexpr double A[2] = {1.0, 0.0};
    m.velocity_potential = [](ConstSpan x, ConstSpan v, double) {
      const double vv = v[0] * v[0] + v[1] * v[1];
      if (vv == 0.0) return 0.0;
      const double va = v[0] * A[0] + v[1] * A[1];
      double s = 0.0;
      for (int i = 0; i < 2; ++i) s += x[i] * (A[i] - v[i] * va / vv);
      return s;
    };
    m.velocity_potential_gradient = [](ConstSpan, ConstSpan v, double, MutSpan g) {
      const double vv = v[0] * v[0] + v[1] * v[1];
      if (vv == 0.0) {
        g[0] = g[1] = 0.0;
        return;
      }
      const double va = v[0] * A[0] + v[1] * A[1];
      for (int i = 0; i < 2; ++i) g[i] = A[i] - v[i] * va / vv;
    };
    return sc;
  }

  throw Error(ErrorKind::config, "unknown scenario '" + std::string(name) + "'");
}

}  // namespace hjreduce
