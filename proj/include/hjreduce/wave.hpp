#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "hjreduce/core.hpp"
#include "hjreduce/hj_scalar.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/rk4.hpp"
#include "hjreduce/spectral.hpp"

namespace hjreduce::wave {

struct WaveField {
  Grid grid;
  CVec values;
  double h = 1.0;
  double time = 0.0;

  WaveField() = default;
  WaveField(Grid g, CVec v, double h_, double t) : grid(std::move(g)), values(std::move(v)), h(h_), time(t) {
    if (!grid.fully_periodic())
      throw Error(ErrorKind::unsupported_domain, "wave fields live on fully periodic grids");
    if (values.size() != grid.size())
      throw Error(ErrorKind::grid_mismatch, "wave field value count does not match grid");
    if (!(h > 0.0) || !std::isfinite(h)) throw Error(ErrorKind::config, "h must be positive");
    for (const auto& z : values)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw Error(ErrorKind::divergence, "wave field is not finite");
  }

  double norm() const {
    double s = 0.0;
    for (const auto& z : values) s += std::norm(z);
    return std::sqrt(s * grid.cell_volume());
  }
};

/// arctan(im/re) on the principal branch [-pi/2, pi/2]; re = 0 maps to
/// +-pi/2 by the sign of im.
inline double principal_arctan(double re, double im) {
  if (re == 0.0) {
    if (im == 0.0) throw Error(ErrorKind::vacuum_node, "phase undefined where the wave function vanishes");
    return im > 0.0 ? std::numbers::pi / 2 : -std::numbers::pi / 2;
  }
  return std::atan(im / re);
}

inline WaveField plane_wave(const Grid& grid, const Vec& k, double h, double amplitude = 1.0) {
  CVec v(grid.size());
  for (std::size_t nd = 0; nd < grid.size(); ++nd) {
    double phase = 0.0;
    for (std::size_t d = 0; d < grid.dim(); ++d) phase += k[d] * grid.coordinate(nd, d);
    v[nd] = std::polar(amplitude, phase);
  }
  return WaveField(grid, std::move(v), h, 0.0);
}

/// A(x) exp(i S(x) / h) from real amplitude and phase functions.
inline WaveField from_amplitude_phase(const Grid& grid, const std::function<double(ConstSpan)>& amplitude,
                                      const std::function<double(ConstSpan)>& phase, double h) {
  CVec v(grid.size());
  for (std::size_t nd = 0; nd < grid.size(); ++nd) {
    const Vec x = grid.position(nd);
    v[nd] = std::polar(amplitude(x), phase(x) / h);
  }
  return WaveField(grid, std::move(v), h, 0.0);
}

/// Strang splitting for
///   i h dPsi/dt = -(h^2/2m) Lap Psi + V Psi + nu h arctan(Im Psi / Re Psi) Psi
/// with a spectral kinetic step. Holds FFT plans, so reuse it across steps.
class Stepper {
 public:
  Stepper(const Grid& grid, const ForceModel& model, double h) : fft_(grid), model_(model), h_(h) {
    model.validate();
    if (model.nongradient || model.velocity_potential || model.velocity_potential_gradient)
      throw Error(ErrorKind::config, "wave evolution supports only V and linear damping");
    if (model.dim != grid.dim()) throw Error(ErrorKind::grid_mismatch, "grid dimension differs from model");
    potential_.resize(grid.size(), 0.0);
    if (model.potential)
      for (std::size_t nd = 0; nd < grid.size(); ++nd) potential_[nd] = model.V(grid.position(nd));
  }

  void step(WaveField& psi, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
    if (!psi.grid.same_nodes(fft_.grid())) throw Error(ErrorKind::grid_mismatch, "wave grid differs from stepper grid");
    if (kinetic_dt_ != dt) {
      kinetic_.resize(psi.values.size());
      for (std::size_t nd = 0; nd < kinetic_.size(); ++nd)
        kinetic_[nd] = std::polar(1.0, -h_ * fft_.k_squared(nd) * dt / (2.0 * model_.mass));
      kinetic_dt_ = dt;
    }
    half_potential(psi, dt);
    fft_.forward(psi.values);
    for (std::size_t nd = 0; nd < kinetic_.size(); ++nd) psi.values[nd] *= kinetic_[nd];
    fft_.backward(psi.values);
    half_potential(psi, dt);
    psi.time += dt;
    for (std::size_t nd = 0; nd < psi.values.size(); ++nd)
      if (!std::isfinite(psi.values[nd].real()) || !std::isfinite(psi.values[nd].imag()))
        throw Error(ErrorKind::divergence, "wave function is not finite",
                    ErrorRecord{psi.grid.position(nd), psi.time});
  }

 private:
  void half_potential(WaveField& psi, double dt) const {
    const double nu = model_.nu;
    for (std::size_t nd = 0; nd < psi.values.size(); ++nd) {
      auto& z = psi.values[nd];
      double w = potential_[nd];
      if (nu != 0.0) {
        try {
          w += nu * h_ * principal_arctan(z.real(), z.imag());
        } catch (const Error&) {
          throw Error(ErrorKind::vacuum_node, "wave function vanishes at a node",
                      ErrorRecord{psi.grid.position(nd), psi.time});
        }
      }
      z *= std::polar(1.0, -w * 0.5 * dt / h_);
    }
  }

  Spectral fft_;
  const ForceModel& model_;
  double h_;
  Vec potential_;
  CVec kinetic_;
  double kinetic_dt_ = -1.0;
};

inline WaveField step_wave(const WaveField& psi, const ForceModel& model, double dt) {
  Stepper stepper(psi.grid, model, psi.h);
  WaveField out = psi;
  stepper.step(out, dt);
  return out;
}

/// Snapshots at each output time; steps of at most dt, shortened to land on
/// every output.
inline std::vector<WaveField> evolve(const WaveField& psi0, const ForceModel& model, double dt,
                                     Vec outputs) {
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
  std::sort(outputs.begin(), outputs.end());
  Stepper stepper(psi0.grid, model, psi0.h);
  WaveField psi = psi0;
  std::vector<WaveField> out;
  for (double target : outputs) {
    if (target < psi.time - 1e-12) throw Error(ErrorKind::config, "output times must not precede the start");
    const double span = target - psi.time;
    if (span > 1e-12 * std::max(1.0, std::abs(target))) {
      const std::size_t steps = step_count(0.0, span, dt);
      const double h = span / static_cast<double>(steps);
      for (std::size_t k = 0; k < steps; ++k) stepper.step(psi, h);
    }
    psi.time = target;
    out.push_back(psi);
  }
  return out;
}

struct PhaseGradient {
  VectorField gradient;
  /// Nodes with |Psi| below the amplitude floor; their gradient is set to 0.
  std::vector<std::size_t> masked;
  /// Largest imaginary part discarded from the nodal formula.
  double max_imaginary = 0.0;
};

inline constexpr double amplitude_floor = 1e-8;

/// dS/dx_i = (h / 2i) (Psi* dPsi - Psi dPsi*) / |Psi|^2 with spectral derivatives.
inline PhaseGradient extract_phase_gradient(const WaveField& psi) {
  const Grid& grid = psi.grid;
  const std::size_t dim = grid.dim();
  const std::size_t size = grid.size();
  Spectral fft(grid);
  double peak = 0.0;
  for (const auto& z : psi.values) peak = std::max(peak, std::abs(z));
  const double floor = amplitude_floor * peak;

  PhaseGradient out{VectorField(grid, dim, psi.time), {}, 0.0};
  std::vector<bool> mask(size, false);
  for (std::size_t nd = 0; nd < size; ++nd)
    if (!(std::abs(psi.values[nd]) >= floor) || peak == 0.0) {
      mask[nd] = true;
      out.masked.push_back(nd);
    }
  CVec conj(size);
  for (std::size_t nd = 0; nd < size; ++nd) conj[nd] = std::conj(psi.values[nd]);
  const Complex half_over_i = Complex(0.0, -0.5 * psi.h);
  for (std::size_t d = 0; d < dim; ++d) {
    const CVec dpsi = fft.derivative(psi.values, d);
    const CVec dconj = fft.derivative(conj, d);
    for (std::size_t nd = 0; nd < size; ++nd) {
      if (mask[nd]) continue;
      const Complex z = psi.values[nd];
      const Complex v = half_over_i * (conj[nd] * dpsi[nd] - z * dconj[nd]) / std::norm(z);
      out.max_imaginary = std::max(out.max_imaginary, std::abs(v.imag()));
      out.gradient.values[nd * dim + d] = v.real();
    }
  }
  return out;
}

/// Principal phase h arctan(Im/Re), or with `unwrap` the line integral of the
/// phase gradient from the first node, anchored at that node's principal value.
inline ScalarField extract_phase(const WaveField& psi, bool unwrap) {
  const Grid& grid = psi.grid;
  const std::size_t size = grid.size();
  ScalarField out(grid, psi.time);
  if (!unwrap) {
    for (std::size_t nd = 0; nd < size; ++nd) {
      try {
        out.values[nd] = psi.h * principal_arctan(psi.values[nd].real(), psi.values[nd].imag());
      } catch (const Error&) {
        throw Error(ErrorKind::vacuum_node, "phase undefined at a vacuum node",
                    ErrorRecord{grid.position(nd), psi.time});
      }
    }
    return out;
  }
  const auto grad = extract_phase_gradient(psi);
  if (!grad.masked.empty())
    throw Error(ErrorKind::vacuum_node, "cannot unwrap the phase across vacuum nodes",
                ErrorRecord{grid.position(grad.masked.front()), psi.time});
  const std::size_t dim = grid.dim();
  const double anchor = psi.h * principal_arctan(psi.values[0].real(), psi.values[0].imag());
  // path: along axis 0, then axis 1, ... ; each leg a trapezoid sum
  for (std::size_t nd = 0; nd < size; ++nd) {
    const auto idx = grid.multi_index(nd);
    std::vector<std::size_t> cur(dim, 0);
    double s = anchor;
    for (std::size_t d = 0; d < dim; ++d) {
      const double h = grid.spacing(d);
      for (std::size_t i = 0; i < idx[d]; ++i) {
        const std::size_t a = grid.flat_index(cur);
        ++cur[d];
        const std::size_t b = grid.flat_index(cur);
        s += 0.5 * h * (grad.gradient.values[a * dim + d] + grad.gradient.values[b * dim + d]);
      }
    }
    out.values[nd] = s;
  }
  return out;
}

struct SemiclassicalReport {
  Vec times;
  /// Per-time max and |Psi|^2-weighted L2 gaps between the wave phase gradient
  /// and grad S of the Hamilton-Jacobi field.
  Vec max_gaps;
  Vec l2_gaps;
  double max_gap = 0.0;
  double l2_gap = 0.0;
  /// Geometric-optics residuals relative to ||Psi||: first space derivative,
  /// second space derivative, time derivative. The time residual uses central
  /// differences of neighbouring snapshots, so it is only meaningful when they
  /// resolve the phase rotation.
  double residual_gradient = 0.0;
  double residual_hessian = 0.0;
  double residual_time = 0.0;
  std::size_t masked_nodes = 0;
};

/// Compares wave snapshots with Hamilton-Jacobi snapshots on the same nodes.
inline SemiclassicalReport semiclassical_gap(const std::vector<WaveField>& psi,
                                             const std::vector<ScalarField>& hj, double m) {
  if (psi.empty() || psi.size() != hj.size())
    throw Error(ErrorKind::grid_mismatch, "wave and Hamilton-Jacobi series differ in length");
  if (!(m > 0.0)) throw Error(ErrorKind::config, "mass must be positive");
  const Grid& grid = psi.front().grid;
  const std::size_t dim = grid.dim();
  const std::size_t size = grid.size();
  for (std::size_t k = 0; k < psi.size(); ++k) {
    if (!psi[k].grid.same_nodes(grid) || !hj[k].grid.same_nodes(grid))
      throw Error(ErrorKind::grid_mismatch, "wave and Hamilton-Jacobi grids differ");
    if (std::abs(psi[k].time - hj[k].time) > 1e-9 * std::max(1.0, std::abs(psi[k].time)))
      throw Error(ErrorKind::grid_mismatch, "wave and Hamilton-Jacobi times differ");
  }
  Spectral fft(grid);
  const double hval = psi.front().h;
  const Complex h_over_i(0.0, -hval);
  SemiclassicalReport rep;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const WaveField& w = psi[k];
    const auto pg = extract_phase_gradient(w);
    const VectorField v = hj::velocity_from_S(hj[k], m);
    std::vector<bool> mask(size, false);
    for (auto nd : pg.masked) mask[nd] = true;
    rep.masked_nodes = std::max(rep.masked_nodes, pg.masked.size());

    double gap_max = 0.0, num = 0.0, den = 0.0;
    for (std::size_t nd = 0; nd < size; ++nd) {
      if (mask[nd]) continue;
      double sq = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double g = pg.gradient.values[nd * dim + d] - m * v.values[nd * dim + d];
        sq += g * g;
      }
      gap_max = std::max(gap_max, std::sqrt(sq));
      const double weight = std::norm(w.values[nd]);
      num += weight * sq;
      den += weight;
    }
    const double gap_l2 = den > 0 ? std::sqrt(num / den) : 0.0;
    rep.times.push_back(w.time);
    rep.max_gaps.push_back(gap_max);
    rep.l2_gaps.push_back(gap_l2);
    rep.max_gap = std::max(rep.max_gap, gap_max);
    rep.l2_gap = std::max(rep.l2_gap, gap_l2);

    // geometric-optics residuals with the wave's own phase derivatives
    const double norm = w.norm();
    const double cell = grid.cell_volume();
    std::vector<CVec> d1(dim);
    for (std::size_t d = 0; d < dim; ++d) d1[d] = fft.derivative(w.values, d);
    double r1 = 0.0, r2 = 0.0;
    for (std::size_t nd = 0; nd < size; ++nd) {
      if (mask[nd]) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        const Complex r = h_over_i * d1[d][nd] - pg.gradient.values[nd * dim + d] * w.values[nd];
        r1 += std::norm(r);
      }
    }
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        const CVec d2 = fft.derivative(d1[i], j);
        for (std::size_t nd = 0; nd < size; ++nd) {
          if (mask[nd]) continue;
          const Complex r = h_over_i * h_over_i * d2[nd] -
                            pg.gradient.values[nd * dim + i] * pg.gradient.values[nd * dim + j] * w.values[nd];
          r2 += std::norm(r);
        }
      }
    if (norm > 0) {
      rep.residual_gradient = std::max(rep.residual_gradient, std::sqrt(r1 * cell) / norm);
      rep.residual_hessian = std::max(rep.residual_hessian, std::sqrt(r2 * cell) / norm);
    }
    if (k > 0 && k + 1 < psi.size()) {
      const double dt = psi[k + 1].time - psi[k - 1].time;
      double r3 = 0.0;
      for (std::size_t nd = 0; nd < size; ++nd) {
        if (mask[nd]) continue;
        const Complex z = w.values[nd];
        const Complex dz = (psi[k + 1].values[nd] - psi[k - 1].values[nd]) / dt;
        const double st = (Complex(0.0, -0.5 * hval) * (std::conj(z) * dz - z * std::conj(dz)) / std::norm(z)).real();
        r3 += std::norm(h_over_i * dz - st * z);
      }
      if (norm > 0) rep.residual_time = std::max(rep.residual_time, std::sqrt(r3 * cell) / norm);
    }
  }
  return rep;
}

}  // namespace hjreduce::wave
