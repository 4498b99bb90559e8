#pragma once

#include <vector>

#include "hjreduce/core.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/rk4.hpp"

namespace hjreduce::newton {

/// Integrates x' = v, v' = f(x, v, t) from t0 with fixed steps of dt, the last
/// step shortened to land on t_end. Every step is recorded.
inline Trajectory integrate(const ForceModel& model, ConstSpan x0, ConstSpan v0, double t_end,
                            double dt, double t0 = 0.0) {
  model.validate();
  const std::size_t n = model.dim;
  if (x0.size() != n || v0.size() != n)
    throw Error(ErrorKind::config, "initial state does not match model dimension");
  Vec y(2 * n);
  std::copy(x0.begin(), x0.end(), y.begin());
  std::copy(v0.begin(), v0.end(), y.begin() + static_cast<std::ptrdiff_t>(n));

  auto rhs = [&](double t, ConstSpan s, MutSpan dy) {
    ConstSpan x = s.subspan(0, n), v = s.subspan(n, n);
    std::copy(v.begin(), v.end(), dy.begin());
    total_force(model, x, v, t, dy.subspan(n, n));
  };
  Trajectory traj;
  integrate_fixed(rhs, t0, y, t_end, dt, [&](double t, ConstSpan s) {
    traj.push(t, s.subspan(0, n), s.subspan(n, n));
  });
  return traj;
}

struct EnergySample {
  double t;
  double kinetic;
  double potential;
  double total;
  /// m (D - nu v) . v: rate of work done by the non-gradient forces.
  double power_nonconservative;
};

inline std::vector<EnergySample> energy_trace(const ForceModel& model, const Trajectory& traj) {
  if (traj.empty()) throw Error(ErrorKind::config, "energy trace needs a non-empty trajectory");
  const std::size_t n = model.dim;
  std::vector<EnergySample> out;
  out.reserve(traj.size());
  Vec d(n, 0.0);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Vec& x = traj.positions[k];
    const Vec& v = traj.velocities[k];
    const double t = traj.times[k];
    const double kin = 0.5 * model.mass * dot(v, v);
    const double pot = model.V(x);
    if (model.nongradient)
      model.nongradient(x, v, t, d);
    else
      std::fill(d.begin(), d.end(), 0.0);
    double power = 0.0;
    for (std::size_t i = 0; i < n; ++i) power += (d[i] - model.nu * v[i]) * v[i];
    power *= model.mass;
    EnergySample s{t, kin, pot, kin + pot, power};
    if (!std::isfinite(s.total) || !std::isfinite(s.power_nonconservative))
      throw Error(ErrorKind::divergence, "energy trace produced a non-finite value",
                  ErrorRecord{x, t});
    out.push_back(s);
  }
  return out;
}

}  // namespace hjreduce::newton
