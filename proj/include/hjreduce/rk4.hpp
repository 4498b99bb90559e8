#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "hjreduce/core.hpp"

namespace hjreduce {

/// Classical fourth-order Runge-Kutta stepper with reusable stage storage.
/// `Rhs` is callable as rhs(t, y, dydt) with spans.
class Rk4 {
 public:
  explicit Rk4(std::size_t n) : k1_(n), k2_(n), k3_(n), k4_(n), tmp_(n) {}

  template <class Rhs>
  void step(Rhs& rhs, double t, MutSpan y, double h) {
    const std::size_t n = y.size();
    rhs(t, ConstSpan(y.data(), n), MutSpan(k1_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + 0.5 * h * k1_[i];
    rhs(t + 0.5 * h, ConstSpan(tmp_), MutSpan(k2_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + 0.5 * h * k2_[i];
    rhs(t + 0.5 * h, ConstSpan(tmp_), MutSpan(k3_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * k3_[i];
    rhs(t + h, ConstSpan(tmp_), MutSpan(k4_));
    for (std::size_t i = 0; i < n; ++i)
      y[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
  }

 private:
  Vec k1_, k2_, k3_, k4_, tmp_;
};

/// Fixed-step schedule from t0 to t_end: nodes t0 + k*dt, with the last step
/// shortened so the final node is exactly t_end.
inline std::size_t step_count(double t0, double t_end, double dt) {
  const double span = (t_end - t0) / dt;
  auto n = static_cast<std::size_t>(std::ceil(span - 1e-9));
  return std::max<std::size_t>(n, 1);
}

inline double schedule_time(double t0, double t_end, double dt, std::size_t k, std::size_t steps) {
  return k >= steps ? t_end : t0 + static_cast<double>(k) * dt;
}

/// Integrates y' = rhs(t, y) on the fixed schedule and calls
/// observer(t, y) at t0 and after every step. Throws a divergence error at the
/// first non-finite state.
template <class Rhs, class Observer>
void integrate_fixed(Rhs& rhs, double t0, MutSpan y, double t_end, double dt, Observer&& observer) {
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
  if (!(t_end > t0)) throw Error(ErrorKind::config, "end time must exceed start time");
  if (!all_finite(y)) throw Error(ErrorKind::config, "initial state is not finite");
  Rk4 rk(y.size());
  const std::size_t steps = step_count(t0, t_end, dt);
  observer(t0, ConstSpan(y.data(), y.size()));
  for (std::size_t k = 0; k < steps; ++k) {
    const double ta = schedule_time(t0, t_end, dt, k, steps);
    const double tb = schedule_time(t0, t_end, dt, k + 1, steps);
    rk.step(rhs, ta, y, tb - ta);
    if (!all_finite(y)) {
      ErrorRecord rec{Vec(y.begin(), y.end()), tb};
      throw Error(ErrorKind::divergence, "non-finite state at t=" + std::to_string(tb), rec);
    }
    observer(tb, ConstSpan(y.data(), y.size()));
  }
}

}  // namespace hjreduce
