#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "hjreduce/core.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/spectral.hpp"

namespace hjreduce::helmholtz {

/// How a non-periodic multi-dimensional field is handled.
enum class DriftMode {
  /// Periodic grids, or 1D open grids only.
  none,
  /// Least-squares affine part B (x - xbar) + c split by symmetry; the
  /// remainder is treated as periodic on the node lattice.
  affine,
};

/// G = grad S / m + R with div R = 0 and S of zero mean.
struct SRDecomposition {
  ScalarField S;
  VectorField gradient_part;
  VectorField R;
  double mass = 1.0;
  double recomposition_error = 0.0;
  double divergence_norm = 0.0;
  /// |<grad S / m, R>| in the grid L2 inner product.
  double orthogonality = 0.0;
  /// Fitted affine drift matrix (row-major, dim x dim); empty unless affine mode.
  Vec drift;
};

namespace detail {

inline Grid periodic_lattice(const Grid& grid) {
  std::vector<Axis> axes = grid.axes();
  for (auto& a : axes) {
    if (!a.periodic) {
      const double h = a.spacing();
      a.upper = a.lower + h * static_cast<double>(a.points);
      a.periodic = true;
    }
  }
  return Grid(std::move(axes));
}

inline double inner(const Grid& grid, const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s * grid.cell_volume();
}

struct SpectralSplit {
  Vec S;
  Vec gradient;
  Vec R;
};

/// Leray projection on a periodic lattice. Modes without a derivative
/// (zero mode, pure Nyquist) stay in R.
inline SpectralSplit spectral_split(const Grid& periodic, const Vec& g, double m) {
  const std::size_t dim = periodic.dim();
  const std::size_t size = periodic.size();
  Spectral fft(periodic);
  std::vector<CVec> comps(dim, CVec(size));
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t nd = 0; nd < size; ++nd) comps[d][nd] = g[nd * dim + d];
    fft.forward(comps[d]);
  }
  CVec s_hat(size, Complex(0.0, 0.0));
  std::vector<CVec> grad_hat(dim, CVec(size, Complex(0.0, 0.0)));
  Vec k(dim);
  for (std::size_t nd = 0; nd < size; ++nd) {
    double kk = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      k[d] = fft.derivative_wavenumber(d, periodic.index_along(nd, d));
      kk += k[d] * k[d];
    }
    if (kk == 0.0) continue;
    Complex kg(0.0, 0.0);
    for (std::size_t d = 0; d < dim; ++d) kg += k[d] * comps[d][nd];
    s_hat[nd] = Complex(0.0, -m) * kg / kk;
    for (std::size_t d = 0; d < dim; ++d) grad_hat[d][nd] = k[d] * kg / kk;
  }
  SpectralSplit out;
  out.S.resize(size);
  out.gradient.resize(size * dim);
  out.R.resize(size * dim);
  fft.backward(s_hat);
  for (std::size_t nd = 0; nd < size; ++nd) out.S[nd] = s_hat[nd].real();
  for (std::size_t d = 0; d < dim; ++d) {
    fft.backward(grad_hat[d]);
    for (std::size_t nd = 0; nd < size; ++nd) {
      out.gradient[nd * dim + d] = grad_hat[d][nd].real();
      out.R[nd * dim + d] = g[nd * dim + d] - grad_hat[d][nd].real();
    }
  }
  return out;
}

inline void remove_mean(Vec& s) {
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  for (double& v : s) v -= mean;
}

}  // namespace detail

/// Splits G into a gradient part and a divergence-free remainder.
inline SRDecomposition decompose(const VectorField& G, double m, DriftMode mode = DriftMode::none) {
  if (!(m > 0.0)) throw Error(ErrorKind::config, "mass must be positive");
  const Grid& grid = G.grid;
  const std::size_t dim = grid.dim();
  const std::size_t size = grid.size();
  if (G.components != dim) throw Error(ErrorKind::grid_mismatch, "field components differ from grid dimension");
  for (std::size_t d = 0; d < dim; ++d)
    if (grid.axis(d).points < 3) throw Error(ErrorKind::config, "each axis needs at least 3 nodes");

  SRDecomposition out;
  out.mass = m;

  if (grid.fully_periodic() && mode == DriftMode::none) {
    auto split = detail::spectral_split(grid, G.values, m);
    detail::remove_mean(split.S);
    Spectral fft(grid);
    const Vec grad_s = fft.gradient(split.S);
    const Vec div_r = fft.divergence(split.R);
    for (std::size_t i = 0; i < G.values.size(); ++i)
      out.recomposition_error = std::max(
          out.recomposition_error, std::abs(G.values[i] - grad_s[i] / m - split.R[i]));
    for (double v : div_r) out.divergence_norm = std::max(out.divergence_norm, std::abs(v));
    out.orthogonality = std::abs(detail::inner(grid, split.gradient, split.R));
    out.S = ScalarField(grid, std::move(split.S), G.time);
    out.gradient_part = VectorField(grid, dim, std::move(split.gradient), G.time);
    out.R = VectorField(grid, dim, std::move(split.R), G.time);
    return out;
  }

  if (dim == 1 && mode == DriftMode::none) {
    // R is the mean; S integrates the rest by the trapezoid rule.
    double mean = 0.0;
    for (double v : G.values) mean += v;
    mean /= static_cast<double>(size);
    Vec s(size, 0.0), grad(size), r(size, mean);
    const double h = grid.spacing(0);
    for (std::size_t i = 0; i < size; ++i) grad[i] = G.values[i] - mean;
    for (std::size_t i = 1; i < size; ++i) s[i] = s[i - 1] + 0.5 * h * m * (grad[i - 1] + grad[i]);
    detail::remove_mean(s);
    for (std::size_t i = 0; i < size; ++i)
      out.recomposition_error = std::max(
          out.recomposition_error, std::abs(G.values[i] - grid_partial(grid, s, i, 0) / m - r[i]));
    out.orthogonality = std::abs(detail::inner(grid, grad, r));
    out.S = ScalarField(grid, std::move(s), G.time);
    out.gradient_part = VectorField(grid, 1, std::move(grad), G.time);
    out.R = VectorField(grid, 1, std::move(r), G.time);
    return out;
  }

  if (mode != DriftMode::affine)
    throw Error(ErrorKind::unsupported_domain,
                "multi-dimensional decomposition needs a periodic grid (or affine drift mode)");

  // Affine drift: G = B (x - xbar) + c + remainder.
  Vec xbar(dim, 0.0);
  for (std::size_t nd = 0; nd < size; ++nd)
    for (std::size_t d = 0; d < dim; ++d) xbar[d] += grid.coordinate(nd, d);
  for (double& v : xbar) v /= static_cast<double>(size);
  Eigen::MatrixXd A(size, dim + 1);
  Eigen::MatrixXd Y(size, dim);
  for (std::size_t nd = 0; nd < size; ++nd) {
    const auto r = static_cast<Eigen::Index>(nd);
    for (std::size_t d = 0; d < dim; ++d) {
      A(r, static_cast<Eigen::Index>(d)) = grid.coordinate(nd, d) - xbar[d];
      Y(r, static_cast<Eigen::Index>(d)) = G.values[nd * dim + d];
    }
    A(r, static_cast<Eigen::Index>(dim)) = 1.0;
  }
  const Eigen::MatrixXd coef = A.colPivHouseholderQr().solve(Y);  // (dim+1) x dim
  Eigen::MatrixXd B(dim, dim);
  Eigen::VectorXd c(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j)
      B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          coef(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
    c(static_cast<Eigen::Index>(i)) = coef(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(i));
  }
  const Eigen::MatrixXd Bs = 0.5 * (B + B.transpose());
  const Eigen::MatrixXd Ba = 0.5 * (B - B.transpose());

  Vec remainder(size * dim);
  Vec affine_grad(size * dim), affine_r(size * dim), affine_s(size);
  Eigen::VectorXd y(dim);
  for (std::size_t nd = 0; nd < size; ++nd) {
    for (std::size_t d = 0; d < dim; ++d) y(static_cast<Eigen::Index>(d)) = grid.coordinate(nd, d) - xbar[d];
    const Eigen::VectorXd gs = Bs * y;
    const Eigen::VectorXd ga = Ba * y + c;
    affine_s[nd] = 0.5 * m * y.dot(gs);
    for (std::size_t d = 0; d < dim; ++d) {
      const auto e = static_cast<Eigen::Index>(d);
      affine_grad[nd * dim + d] = gs(e);
      affine_r[nd * dim + d] = ga(e);
      remainder[nd * dim + d] = G.values[nd * dim + d] - gs(e) - ga(e);
    }
  }
  const Grid lattice = detail::periodic_lattice(grid);
  auto split = detail::spectral_split(lattice, remainder, m);
  Spectral fft(lattice);
  const Vec rem_grad = fft.gradient(split.S);
  const Vec rem_div = fft.divergence(split.R);

  Vec s(size), grad(size * dim), r(size * dim);
  for (std::size_t nd = 0; nd < size; ++nd) s[nd] = affine_s[nd] + split.S[nd];
  detail::remove_mean(s);
  for (std::size_t i = 0; i < size * dim; ++i) {
    grad[i] = affine_grad[i] + split.gradient[i];
    r[i] = affine_r[i] + split.R[i];
    out.recomposition_error = std::max(
        out.recomposition_error, std::abs(G.values[i] - affine_grad[i] - rem_grad[i] / m - r[i]));
  }
  // the antisymmetric drift is trace-free, so only the remainder contributes
  for (double v : rem_div) out.divergence_norm = std::max(out.divergence_norm, std::abs(v));
  out.orthogonality = std::abs(detail::inner(grid, split.gradient, split.R));
  out.drift.resize(dim * dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      out.drift[i * dim + j] = B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  out.S = ScalarField(grid, std::move(s), G.time);
  out.gradient_part = VectorField(grid, dim, std::move(grad), G.time);
  out.R = VectorField(grid, dim, std::move(r), G.time);
  return out;
}

/// grad S / m + R, spectral on periodic grids and second-order otherwise.
inline VectorField recompose(const ScalarField& S, const VectorField& R, double m) {
  require_same_grid(S.grid, R.grid, "recompose");
  const Grid& grid = S.grid;
  const std::size_t dim = grid.dim();
  VectorField g(grid, dim, S.time);
  if (grid.fully_periodic()) {
    Spectral fft(grid);
    const Vec grad = fft.gradient(S.values);
    for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = grad[i] / m + R.values[i];
  } else {
    for (std::size_t nd = 0; nd < grid.size(); ++nd)
      for (std::size_t d = 0; d < dim; ++d)
        g.values[nd * dim + d] = grid_partial(grid, S.values, nd, d) / m + R.values[nd * dim + d];
  }
  return g;
}

/// Per-node norms of each block of the split slaving system.
struct SystemResidual {
  /// (1/m) d_i (|grad S|^2/(2m) + dS/dt + V + nu S)
  ScalarField scalar;
  /// (1/m) (R_j d_ji S + d_j R_i d_j S)
  ScalarField coupling;
  /// (1/m) d1_i Ftilde - Dtilde_i with Dtilde = D(x, G, t) - nu R
  ScalarField force;
  /// R_j d_j R_i + dR_i/dt
  ScalarField transport;
  ScalarField total;
  ScalarField divergence;
  double divergence_norm = 0.0;

  static double max_of(const ScalarField& f) {
    double m = 0.0;
    for (double v : f.values) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Residual of the split system at the middle of three (S, R) slices, with
/// second-order differences in space and central differences in time.
inline SystemResidual residual_system(const std::array<ScalarField, 3>& S,
                                      const std::array<VectorField, 3>& R, const ForceModel& model,
                                      double dt) {
  const Grid& grid = S[1].grid;
  for (int k = 0; k < 3; ++k) {
    require_same_grid(S[static_cast<std::size_t>(k)].grid, grid, "residual slices");
    require_same_grid(R[static_cast<std::size_t>(k)].grid, grid, "residual slices");
  }
  const std::size_t dim = grid.dim();
  if (model.dim != dim || R[1].components != dim)
    throw Error(ErrorKind::grid_mismatch, "residual slices do not match model dimension");
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "time step must be positive");
  const double tol = 1e-9 * dt;
  if (std::abs(S[1].time - R[1].time) > tol ||
      std::abs((S[2].time - S[0].time) - 2.0 * dt) > 1e-6 * dt)
    throw Error(ErrorKind::grid_mismatch, "slice times are inconsistent with dt");

  const double m = model.mass, nu = model.nu;
  const double t = S[1].time;
  const std::size_t size = grid.size();
  const Vec& s = S[1].values;
  const Vec& r = R[1].values;

  // first and second derivatives of S, first derivatives of R
  Vec ds(size * dim), dds(size * dim * dim), dr(size * dim * dim);
  for (std::size_t nd = 0; nd < size; ++nd)
    for (std::size_t j = 0; j < dim; ++j) {
      ds[nd * dim + j] = grid_partial(grid, s, nd, j);
      for (std::size_t i = 0; i < dim; ++i) dr[(nd * dim + i) * dim + j] = grid_partial(grid, r, nd, j, dim, i);
    }
  for (std::size_t nd = 0; nd < size; ++nd)
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        dds[(nd * dim + i) * dim + j] = grid_partial(grid, ds, nd, j, dim, i);

  Vec e(size);
  for (std::size_t nd = 0; nd < size; ++nd) {
    double q = 0.0;
    for (std::size_t j = 0; j < dim; ++j) q += ds[nd * dim + j] * ds[nd * dim + j];
    e[nd] = q / (2.0 * m) + (S[2].values[nd] - S[0].values[nd]) / (2.0 * dt) +
            model.V(grid.position(nd)) + nu * s[nd];
  }

  SystemResidual out{ScalarField(grid, t), ScalarField(grid, t), ScalarField(grid, t),
                     ScalarField(grid, t), ScalarField(grid, t), ScalarField(grid, t)};
  Vec g(dim), dft(dim), dmod(dim);
  for (std::size_t nd = 0; nd < size; ++nd) {
    const Vec x = grid.position(nd);
    for (std::size_t i = 0; i < dim; ++i) g[i] = ds[nd * dim + i] / m + r[nd * dim + i];
    std::fill(dft.begin(), dft.end(), 0.0);
    std::fill(dmod.begin(), dmod.end(), 0.0);
    velocity_potential_gradient(model, x, g, t, dft);
    if (model.nongradient) model.nongradient(x, g, t, dmod);
    double n_scalar = 0, n_coupling = 0, n_force = 0, n_transport = 0, n_total = 0, div = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double scalar = grid_partial(grid, e, nd, i) / m;
      double coupling = 0.0, transport = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        coupling += r[nd * dim + j] * dds[(nd * dim + j) * dim + i] +
                    dr[(nd * dim + i) * dim + j] * ds[nd * dim + j];
        transport += r[nd * dim + j] * dr[(nd * dim + i) * dim + j];
      }
      coupling /= m;
      transport += (R[2].values[nd * dim + i] - R[0].values[nd * dim + i]) / (2.0 * dt);
      const double force = dft[i] / m - (dmod[i] - nu * r[nd * dim + i]);
      const double total = scalar + coupling + force + transport;
      n_scalar += scalar * scalar;
      n_coupling += coupling * coupling;
      n_force += force * force;
      n_transport += transport * transport;
      n_total += total * total;
      div += dr[(nd * dim + i) * dim + i];
    }
    out.scalar.values[nd] = std::sqrt(n_scalar);
    out.coupling.values[nd] = std::sqrt(n_coupling);
    out.force.values[nd] = std::sqrt(n_force);
    out.transport.values[nd] = std::sqrt(n_transport);
    out.total.values[nd] = std::sqrt(n_total);
    out.divergence.values[nd] = div;
    out.divergence_norm = std::max(out.divergence_norm, std::abs(div));
  }
  return out;
}

/// Magnitude of the antisymmetric part of the Jacobian of G.
inline ScalarField curl_diagnostic(const VectorField& G) {
  const Grid& grid = G.grid;
  const std::size_t dim = grid.dim();
  if (dim < 2) throw Error(ErrorKind::not_applicable, "curl diagnostic needs at least two dimensions");
  if (G.components != dim) throw Error(ErrorKind::grid_mismatch, "field components differ from grid dimension");
  ScalarField out(grid, G.time);
  for (std::size_t nd = 0; nd < grid.size(); ++nd) {
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = i + 1; j < dim; ++j) {
        const double w = grid_partial(grid, G.values, nd, j, dim, i) -
                         grid_partial(grid, G.values, nd, i, dim, j);
        sq += w * w;
      }
    out.values[nd] = std::sqrt(sq);
  }
  return out;
}

/// Grid L2 norm of a vector field.
inline double l2_norm(const VectorField& f) {
  double s = 0.0;
  for (double v : f.values) s += v * v;
  return std::sqrt(s * f.grid.cell_volume());
}

}  // namespace hjreduce::helmholtz
