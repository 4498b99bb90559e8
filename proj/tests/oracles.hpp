#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's solvers.

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

// Values computed once with 30-digit arithmetic and frozen.
inline constexpr double two_minus_inv_e = 1.6321205588285577;
inline constexpr double inv_e = 0.36787944117144233;
inline constexpr double riccati_a1 = 0.11269983678028204;       // 1/(4e - 2)
inline constexpr double minus_half_tan1 = -0.77870386232745112;  // -tan(1)/2
inline constexpr double half_cos1 = 0.27015115293406986;
inline constexpr double three_minus_pi = -0.14159265358979324;
// y'' + 0.5 y' + y = 0, y(0) = 1, y'(0) = 0, at t = 1
inline constexpr double damped_harmonic_x1 = 0.60705484916703567;
inline constexpr double damped_harmonic_v1 = -0.66269158800808424;

/// a(t) in S = a(t) x^2 for nu, m with a(0) = 1/2: a' + 2a^2/m + nu a = 0.
inline double riccati(double t, double m, double nu) {
  // separable: 1/a = (1/a0 + 2/(m nu)) e^{nu t} - 2/(m nu)
  if (nu == 0.0) return 1.0 / (2.0 + 2.0 * t / m);
  const double k = 2.0 / (m * nu);
  return 1.0 / ((2.0 + k) * std::exp(nu * t) - k);
}

/// Harmonic oscillator action between (x0, 0) and (x1, T), m = w = 1.
inline double harmonic_action(double x0, double x1, double T) {
  return ((x0 * x0 + x1 * x1) * std::cos(T) - 2.0 * x0 * x1) / (2.0 * std::sin(T));
}

/// Dense-scan minimum of g(y) + m (x - y)^2 / (2t) over [x - R, x + R],
/// followed by a parabolic polish of the best bracket.
inline double hopf_lax_scan(const std::function<double(double)>& g, double m, double x, double t,
                            double R = 6.0, int points = 600001) {
  auto f = [&](double y) { return g(y) + m * (x - y) * (x - y) / (2.0 * t); };
  const double h = 2.0 * R / (points - 1);
  double best = f(x), by = x;
  for (int i = 0; i < points; ++i) {
    const double y = x - R + i * h;
    const double v = f(y);
    if (v < best) {
      best = v;
      by = y;
    }
  }
  const double a = f(by - h), b = f(by), c = f(by + h);
  const double den = a - 2.0 * b + c;
  if (den > 0) {
    const double off = 0.5 * h * (a - c) / den;
    best = std::min(best, f(by + off));
  }
  return best;
}

using Mat2 = std::array<double, 4>;  // row-major

inline Mat2 mul(const Mat2& a, const Mat2& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
          a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

/// Curl force x'' = M x with M = [[0, 1], [-1, 0]]: position and velocity
/// propagators from the power series of cosh/sinh(sqrt(M) t).
struct CurlPropagator {
  Mat2 C{}, S{}, Cd{}, Sd{};
};

inline CurlPropagator curl_series(double t) {
  const Mat2 M{0.0, 1.0, -1.0, 0.0};
  Mat2 P{1.0, 0.0, 0.0, 1.0};  // M^k
  CurlPropagator out;
  double fact_even = 1.0;  // (2k)!
  for (int k = 0; k < 40; ++k) {
    const double te = std::pow(t, 2 * k) / fact_even;
    const double to = std::pow(t, 2 * k + 1) / (fact_even * (2 * k + 1));
    const double tem1 = k > 0 ? std::pow(t, 2 * k - 1) / (fact_even / (2 * k)) : 0.0;
    for (int i = 0; i < 4; ++i) {
      out.C[i] += P[i] * te;    // C = sum M^k t^{2k}/(2k)!
      out.S[i] += P[i] * to;    // S = sum M^k t^{2k+1}/(2k+1)!
      out.Cd[i] += P[i] * tem1; // C'
      out.Sd[i] += P[i] * te;   // S' = C
    }
    P = mul(P, M);
    fact_even *= (2.0 * k + 1.0) * (2.0 * k + 2.0);
  }
  return out;
}

/// G(x, t) for curl2d with G0(x) = alpha x: G = (C' + alpha S')(C + alpha S)^{-1} x.
inline std::array<double, 2> curl_G(double alpha, double t, double x, double y) {
  const auto p = curl_series(t);
  Mat2 phi, vel;
  for (int i = 0; i < 4; ++i) {
    phi[i] = p.C[i] + alpha * p.S[i];
    vel[i] = p.Cd[i] + alpha * p.Sd[i];
  }
  const double det = phi[0] * phi[3] - phi[1] * phi[2];
  const Mat2 inv{phi[3] / det, -phi[1] / det, -phi[2] / det, phi[0] / det};
  const Mat2 g = mul(vel, inv);
  return {g[0] * x + g[1] * y, g[2] * x + g[3] * y};
}

/// Free Schroedinger Gaussian packet with initial width sigma, centre x0 and
/// momentum p0 (m, h given), evaluated on the real line.
inline std::complex<double> free_gaussian(double x, double t, double x0, double sigma, double p0,
                                          double m, double h) {
  using C = std::complex<double>;
  const double k0 = p0 / h;
  const C s2 = C(sigma * sigma, h * t / m);
  const C pref = std::sqrt(C(sigma * sigma, 0.0) / s2);
  const double xc = x - x0 - p0 * t / m;
  return pref * std::exp(-xc * xc / (2.0 * s2) + C(0.0, 1.0) * (k0 * (x - x0) - h * k0 * k0 * t / (2.0 * m)));
}

/// Sixth-order central derivative of f at x with step h.
inline double d6(const std::function<double(double)>& f, double x, double h) {
  return (-f(x - 3 * h) + 9 * f(x - 2 * h) - 45 * f(x - h) + 45 * f(x + h) - 9 * f(x + 2 * h) + f(x + 3 * h)) /
         (60.0 * h);
}

}  // namespace oracle
