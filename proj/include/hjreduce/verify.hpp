#pragma once

// Cross-module acceptance suite shared by the CLI `verify` pipeline and the
// acceptance test binary. Rendering is fixed-format so reruns can be compared
// byte for byte.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hjreduce/action.hpp"
#include "hjreduce/core.hpp"
#include "hjreduce/helmholtz.hpp"
#include "hjreduce/hj_scalar.hpp"
#include "hjreduce/manifold.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/newton.hpp"
#include "hjreduce/wave.hpp"

namespace hjreduce::verify {

struct Check {
  std::string label;
  double value = 0.0;
  std::string bound;
  bool pass = false;
};

struct Row {
  int id = 0;
  std::string title;
  std::vector<Check> checks;
  std::string error;

  bool pass() const {
    if (!error.empty() || checks.empty()) return false;
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct Report {
  std::vector<Row> rows;

  bool pass() const {
    for (const auto& r : rows)
      if (!r.pass()) return false;
    return true;
  }
};

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline Check at_most(std::string label, double value, double bound) {
  return {std::move(label), value, "<= " + sci(bound), std::isfinite(value) && value <= bound};
}

inline Check at_least(std::string label, double value, double bound) {
  return {std::move(label), value, ">= " + sci(bound), std::isfinite(value) && value >= bound};
}

inline Check between(std::string label, double value, double lo, double hi) {
  return {std::move(label), value, "in [" + sci(lo) + ", " + sci(hi) + "]",
          std::isfinite(value) && value >= lo && value <= hi};
}

inline Check holds(std::string label, bool ok) { return {std::move(label), ok ? 1.0 : 0.0, "== 1", ok}; }

/// One line per criterion.
inline std::string render_row(const Row& r) {
  std::string s = "criterion " + std::to_string(r.id) + " " + (r.pass() ? "PASS" : "FAIL") + " " + r.title;
  for (const auto& c : r.checks)
    s += " | " + c.label + " " + sci(c.value) + " " + c.bound + (c.pass ? " ok" : " FAIL");
  if (!r.error.empty()) s += " | error: " + r.error;
  return s + "\n";
}

inline std::string render(const Report& rep) {
  std::string s;
  for (const auto& r : rep.rows) s += render_row(r);
  return s;
}

namespace detail {

constexpr double pi = std::numbers::pi;
// a(1) for a' + 2a^2 + a = 0, a(0) = 1/2, i.e. 1/(4e - 2)
constexpr double riccati_a1 = 0.11269983678028204;

inline Row guarded(int id, std::string title, const std::function<void(std::vector<Check>&)>& body) {
  Row r{id, std::move(title), {}, {}};
  try {
    body(r.checks);
  } catch (const Error& e) {
    r.error = std::string(to_string(e.kind())) + ": " + e.what();
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

inline double riccati(double t) { return 1.0 / (4.0 * std::exp(t) - 2.0); }

inline double max_node_error(const ScalarField& f, const std::function<double(double)>& exact,
                             double window = std::numeric_limits<double>::infinity()) {
  double e = 0.0;
  for (std::size_t n = 0; n < f.grid.size(); ++n) {
    const double x = f.grid.coordinate(n, 0);
    if (std::abs(x) <= window) e = std::max(e, std::abs(f.values[n] - exact(x)));
  }
  return e;
}

inline double max_abs(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double half_square(ConstSpan x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return 0.5 * s;
}

// ---------------------------------------------------------------------------

inline Row slaving() {
  return guarded(1, "slaving", [](std::vector<Check>& out) {
    struct Case {
      const char* name;
      manifold::VelocityProvider closed;
      manifold::InitialVelocity g0;
      hj::InitialData s0;
      double x0;
    };
    const std::vector<Case> cases = {
        {"free", [](ConstSpan, double, MutSpan v) { v[0] = 1.0; },
         [](ConstSpan, MutSpan v) { v[0] = 1.0; }, [](ConstSpan x) { return x[0]; }, 0.2},
        {"damped_free", [](ConstSpan x, double t, MutSpan v) { v[0] = 2.0 * riccati(t) * x[0]; },
         [](ConstSpan x, MutSpan v) { v[0] = x[0]; }, half_square, 0.5},
        {"harmonic", [](ConstSpan x, double t, MutSpan v) { v[0] = -x[0] * std::tan(t); },
         [](ConstSpan, MutSpan v) { v[0] = 0.0; }, [](ConstSpan) { return 0.0; }, 0.8},
    };
    const Grid grid = Grid::line(-2.0, 2.0, 401);
    Vec times;
    for (int k = 0; k <= 100; ++k) times.push_back(0.01 * k);
    for (const auto& c : cases) {
      const auto model = make_scenario(c.name).model;
      const std::string tag = c.name;
      out.push_back(at_most(tag + " closed-form", manifold::slaving_error(model, c.closed, Vec{c.x0}, 1.0, 1e-3), 1e-7));

      const manifold::FieldSeriesProvider chars(manifold::build_G_series(model, c.g0, grid, times, 1e-3));
      out.push_back(at_most(tag + " characteristics", manifold::slaving_error(model, std::cref(chars), Vec{c.x0}, 1.0, 1e-3), 5e-3));

      const auto sol = hj::solve_hj(hj::HJProblem(model, c.s0, grid, 1.0, times), 1e-2);
      std::vector<VectorField> series;
      for (const auto& f : sol.fields) series.push_back(hj::velocity_from_S(f, model.mass));
      const manifold::FieldSeriesProvider grid_hj(std::move(series));
      out.push_back(at_most(tag + " hj-grid", manifold::slaving_error(model, std::cref(grid_hj), Vec{c.x0}, 1.0, 1e-3), 5e-3));
    }
  });
}

inline Row riccati_sheet() {
  return guarded(2, "dissipative riccati", [](std::vector<Check>& out) {
    const auto model = make_scenario("damped_free", {.nu = 1.0}).model;
    auto err = [&](std::size_t points) {
      const Grid g = Grid::line(-1.0, 1.0, points);
      const auto sol = hj::solve_hj(hj::HJProblem(model, half_square, g, 1.0), 1e-2);
      return max_node_error(sol.fields.back(), [](double x) { return riccati_a1 * x * x; });
    };
    const double e1 = err(201), e2 = err(401), e3 = err(801);
    out.push_back(at_most("max error 401", e2, 1e-3));
    out.push_back(between("ratio 201/401", e1 / e2, 1.4, 2.6));
    out.push_back(between("ratio 401/801", e2 / e3, 1.4, 2.6));
  });
}

inline Row hopf_lax() {
  return guarded(3, "hopf-lax", [](std::vector<Check>& out) {
    const auto model = make_scenario("free").model;
    struct Case {
      const char* name;
      hj::InitialData g;
      std::size_t points;
    };
    const std::vector<Case> cases = {
        {"x^2/2", half_square, 401},
        {"|x|", [](ConstSpan x) { return std::abs(x[0]); }, 6401},
    };
    for (const auto& c : cases) {
      const Grid g = Grid::line(-1.0, 1.0, c.points);
      const auto sol = hj::solve_hj(hj::HJProblem(model, c.g, g, 1.0), 1e-2);
      const auto& S = sol.fields.back();
      double e = 0.0;
      const std::size_t stride = std::max<std::size_t>(1, (c.points - 1) / 50);
      for (std::size_t n = 0; n < g.size(); n += stride) {
        const Vec x{g.coordinate(n, 0)};
        e = std::max(e, std::abs(S.values[n] - hj::hopf_lax(c.g, model.mass, x, 1.0)));
      }
      out.push_back(at_most(std::string(c.name) + " grid vs hopf-lax", e, 2e-3));
    }
    const Vec one{1.0};
    out.push_back(at_most("hopf-lax S(1,1) - 0.25", std::abs(hj::hopf_lax(half_square, 1.0, one, 1.0) - 0.25), 1e-8));
  });
}

inline Row caustic() {
  return guarded(4, "caustic", [](std::vector<Check>& out) {
    const auto model = make_scenario("harmonic").model;
    const Grid g = Grid::line(-1.0, 1.0, 41);
    const manifold::InitialVelocity rest = [](ConstSpan, MutSpan v) { v[0] = 0.0; };
    double fold_time = std::nan("");
    try {
      manifold::build_G(model, rest, g, 1.6, 1e-3);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::fold) throw;
      if (e.record()) fold_time = e.record()->time;
    }
    out.push_back(between("fold time", fold_time, pi / 2 - 0.02, pi / 2 + 0.02));
  });
}

inline Row helmholtz_split() {
  return guarded(5, "helmholtz", [](std::vector<Check>& out) {
    using helmholtz::DriftMode;
    {
      const Grid g({Axis{0.0, 2 * pi, 32, true}, Axis{0.0, 2 * pi, 32, true}});
      VectorField G(g, 2, 0.0);
      for (std::size_t n = 0; n < g.size(); ++n) {
        const double x = g.coordinate(n, 0), y = g.coordinate(n, 1);
        G.values[2 * n] = std::sin(x) + 0.3 * std::cos(y) + 0.2;
        G.values[2 * n + 1] = 0.5 * std::cos(x + y);
      }
      const auto d = helmholtz::decompose(G, 1.5);
      out.push_back(at_most("spectral recomposition", d.recomposition_error, 1e-10));
      out.push_back(at_most("spectral div R", d.divergence_norm, 1e-10));
    }
    const auto curl = make_scenario("curl2d").model;
    const manifold::InitialVelocity spread = [](ConstSpan x, MutSpan v) {
      v[0] = 0.5 * x[0];
      v[1] = 0.5 * x[1];
    };
    {
      auto residual = [&](std::size_t points, double dt) {
        const Grid g = Grid::square(-1.0, 1.0, points);
        const auto series = manifold::build_G_series(curl, spread, g, {0.5 - dt, 0.5, 0.5 + dt}, 1e-3);
        std::array<ScalarField, 3> S;
        std::array<VectorField, 3> R;
        for (std::size_t k = 0; k < 3; ++k) {
          auto d = helmholtz::decompose(series[k], curl.mass, DriftMode::affine);
          S[k] = std::move(d.S);
          R[k] = std::move(d.R);
        }
        return helmholtz::SystemResidual::max_of(helmholtz::residual_system(S, R, curl, dt).total);
      };
      const double r1 = residual(9, 0.1), r2 = residual(17, 0.05), r3 = residual(33, 0.025);
      out.push_back(at_least("residual ratio 9/17", r1 / r2, 1.8));
      out.push_back(at_least("residual ratio 17/33", r2 / r3, 1.8));
    }
    {
      const Grid g = Grid::square(-1.0, 1.0, 17);
      const auto series = manifold::build_G_series(curl, spread, g, {0.0, 0.5}, 1e-3);
      const double r0 = helmholtz::l2_norm(helmholtz::decompose(series[0], 1.0, DriftMode::affine).R);
      const double r1 = helmholtz::l2_norm(helmholtz::decompose(series[1], 1.0, DriftMode::affine).R);
      out.push_back(at_least("curl2d |R| growth", r1 / std::max(r0, 1e-300), 100.0));
    }
    {
      const auto harmonic = make_scenario("harmonic", {.dim = 2}).model;
      const manifold::InitialVelocity cubic = [](ConstSpan x, MutSpan v) {
        v[0] = 0.15 * x[0] * x[0] * x[1];
        v[1] = 0.05 * x[0] * x[0] * x[0];
      };
      const Grid g = Grid::square(-1.0, 1.0, 17);
      manifold::BuildOptions opt;
      opt.inflation = 0.5;
      const auto series = manifold::build_G_series(harmonic, cubic, g, {0.0, 0.2, 0.3, 0.4}, 1e-3, opt);
      const double c0 = max_abs(helmholtz::curl_diagnostic(series[0]).values);
      double worst = 0.0;
      for (const auto& G : series) worst = std::max(worst, max_abs(helmholtz::curl_diagnostic(G).values));
      out.push_back(at_most("conservative curl growth", worst / c0, 10.0));
    }
  });
}

inline Row wave_checks() {
  return guarded(6, "wave", [](std::vector<Check>& out) {
    const auto free = make_scenario("free").model;
    const Grid ring = Grid::line(0.0, 2 * pi, 64, true);
    {
      double worst = 0.0;
      for (const auto& w : wave::evolve(wave::plane_wave(ring, {1.0}, 1.0), free, 1e-2, {1.0, 2.0})) {
        double err = 0.0;
        for (std::size_t n = 0; n < ring.size(); ++n)
          err = std::max(err, std::abs(w.values[n] - std::polar(1.0, ring.coordinate(n, 0) - w.time / 2.0)));
        worst = std::max(worst, err / w.time);
      }
      out.push_back(at_most("plane wave error per unit time", worst, 1e-10));
    }
    auto gaussian = [](const Grid& g, double centre, double sigma, double p0, double h) {
      return wave::from_amplitude_phase(
          g, [=](ConstSpan x) { return std::exp(-(x[0] - centre) * (x[0] - centre) / (2.0 * sigma * sigma)); },
          [=](ConstSpan x) { return p0 * (x[0] - centre); }, h);
    };
    for (double nu : {0.0, 1.0}) {
      const auto model = make_scenario("damped_harmonic", {.nu = nu}).model;
      const Grid g = Grid::line(-8.0, 8.0, 256, true);
      const auto psi0 = gaussian(g, 1.0, 1.0, 0.5, 0.5);
      double drift = 0.0;
      for (const auto& w : wave::evolve(psi0, model, 1e-3, {1.0, 2.0}))
        drift = std::max(drift, std::abs(w.norm() - psi0.norm()) / psi0.norm() / w.time);
      out.push_back(at_most("norm drift nu=" + std::to_string(static_cast<int>(nu)), drift, 1e-9));
    }
    {
      const Grid g = Grid::line(0.0, 2 * pi, 512, true);
      const Vec outs{0.25, 0.5, 0.75, 1.0};
      auto gap = [&](double h) {
        const auto psi = wave::evolve(gaussian(g, pi - 0.5, 0.4, 1.0, h), free, 1e-3, outs);
        const auto S = hj::solve_hj(
            hj::HJProblem(free, [](ConstSpan x) { return x[0] - (pi - 0.5); }, g.as_open(), outs.back(), outs), 1e-2);
        return wave::semiclassical_gap(psi, S.fields, free.mass).l2_gap;
      };
      const double g1 = gap(0.1), g2 = gap(0.05), g3 = gap(0.025);
      out.push_back(between("semiclassical gap ratio 0.1/0.05", g1 / g2, 1.5, 2.5));
      out.push_back(between("semiclassical gap ratio 0.05/0.025", g2 / g3, 1.5, 2.5));
    }
    out.push_back(at_most("principal arctan(tan 3) - (3 - pi)",
                          std::abs(wave::principal_arctan(std::cos(3.0), std::sin(3.0)) - (3.0 - pi)), 1e-12));
  });
}

inline Row action_checks() {
  return guarded(7, "action", [](std::vector<Check>& out) {
    using namespace action;
    const auto harmonic = lagrangian_of(make_scenario("harmonic").model);
    const auto free = mechanical_lagrangian(1, 1.0);
    {
      const auto ex = solve_extremal(harmonic, Vec{0.0}, 0.0, Vec{1.0}, pi / 2);
      out.push_back(at_most("harmonic action", std::abs(ex.action_value), 1e-6));
      const auto trace = hamiltonian_drift(harmonic, ex);
      double drift = 0.0;
      for (const auto& s : trace) drift = std::max(drift, std::abs(s.H - trace.front().H));
      out.push_back(at_most("hamiltonian drift", drift, 1e-8));
    }
    out.push_back(at_most("free action", std::abs(solve_extremal(free, Vec{0.0}, 0.0, Vec{1.0}, 1.0).action_value - 0.5), 1e-10));
    {
      const auto ex = solve_extremal(harmonic, Vec{0.2}, 0.0, Vec{0.8}, 1.2);
      double worst = 0.0;
      for (auto [dx, dt] : {std::pair{1.0, 0.0}, {0.0, 1.0}, {0.6, -0.8}}) {
        const auto r = endpoint_variation(harmonic, ex, Vec{dx}, dt);
        worst = std::max(worst, std::abs(r.measured - r.predicted));
      }
      out.push_back(at_most("endpoint variation", worst, 1e-5));
    }
    {
      auto residual = [&](std::size_t points, double dt) {
        const auto sh = build_sheet(harmonic, Vec{0.0}, 0.0, Grid::line(-1.0, 1.0, points), {1.0 - dt, 1.0, 1.0 + dt});
        return hj_residual_of_sheet(harmonic, sh).max;
      };
      const double r1 = residual(21, 0.05), r2 = residual(41, 0.025), r3 = residual(81, 0.0125);
      out.push_back(at_most("sheet residual 81", r3, 1e-3));
      out.push_back(between("sheet residual ratio 21/41", r1 / r2, 3.4, 4.6));
      out.push_back(between("sheet residual ratio 41/81", r2 / r3, 3.4, 4.6));
    }
    {
      const ActionProvider S{[](ConstSpan x, double t) { return x[0] * x[0] / (2.0 * t); },
                             [](ConstSpan x, double t, MutSpan g) { g[0] = x[0] / t; }};
      out.push_back(at_most("converse EL residual", converse_check(free, S, Vec{1.0}, 1.0, 2.0, 1e-3).el_residual, 1e-8));
    }
    {
      bool raised = false;
      try {
        solve_extremal(harmonic, Vec{0.0}, 0.0, Vec{0.0}, pi);
      } catch (const Error& e) {
        raised = e.kind() == ErrorKind::conjugate_point;
      }
      out.push_back(holds("conjugate point raised", raised));
    }
    {
      // two continuation branches seeded on opposite sides past t = pi
      const Grid xs = Grid::line(0.5, 1.0, 3);
      SheetOptions a, b;
      a.branch = 0;
      a.seed_velocity = Vec{-2.0};
      b.branch = 1;
      b.seed_velocity = Vec{5.0};
      const auto s0 = build_sheet(harmonic, Vec{0.0}, 0.0, xs, {3.5, 3.6}, a);
      const auto s1 = build_sheet(harmonic, Vec{0.0}, 0.0, xs, {3.5, 3.6}, b);
      double spread = 0.0;
      for (std::size_t id = 0; id < s0.S.size(); ++id) spread = std::max(spread, std::abs(s0.S[id] - s1.S[id]));
      out.push_back(at_least("distinct sheet values past pi", spread, 1e-6));
    }
  });
}

}  // namespace detail

/// Criteria 1-7.
inline Report run_core() {
  Report rep;
  rep.rows.push_back(detail::slaving());
  rep.rows.push_back(detail::riccati_sheet());
  rep.rows.push_back(detail::hopf_lax());
  rep.rows.push_back(detail::caustic());
  rep.rows.push_back(detail::helmholtz_split());
  rep.rows.push_back(detail::wave_checks());
  rep.rows.push_back(detail::action_checks());
  return rep;
}

/// Byte comparison of two renderings, reported as criterion 8.
inline Row determinism_row(const std::string& first, const std::string& second) {
  Row r{8, "determinism", {}, {}};
  r.checks.push_back(holds("identical reports", !first.empty() && first == second));
  return r;
}

/// Criteria 1-7 plus an in-process rerun on a single worker for criterion 8.
inline Report run_all() {
  Report rep = run_core();
  const std::string first = render(rep);
  const char* prev = std::getenv("HJREDUCE_THREADS");
  const std::optional<std::string> saved = prev ? std::optional<std::string>(prev) : std::nullopt;
  ::setenv("HJREDUCE_THREADS", "1", 1);
  const std::string second = render(run_core());
  if (saved)
    ::setenv("HJREDUCE_THREADS", saved->c_str(), 1);
  else
    ::unsetenv("HJREDUCE_THREADS");
  rep.rows.push_back(determinism_row(first, second));
  return rep;
}

}  // namespace hjreduce::verify
