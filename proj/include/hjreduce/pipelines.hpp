#pragma once

// Config-driven runs of each module with file output. Every data file is
// written with fixed 17-digit formatting and no timestamps.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hjreduce/action.hpp"
#include "hjreduce/config.hpp"
#include "hjreduce/helmholtz.hpp"
#include "hjreduce/hj_scalar.hpp"
#include "hjreduce/io.hpp"
#include "hjreduce/manifold.hpp"
#include "hjreduce/newton.hpp"
#include "hjreduce/verify.hpp"
#include "hjreduce/wave.hpp"

namespace hjreduce::pipelines {

using json = nlohmann::json;

struct Options {
  std::optional<std::size_t> seed_factor;
};

/// Summary table rows plus the process exit code.
struct Outcome {
  std::vector<std::pair<std::string, std::string>> summary;
  int exit_code = 0;
  std::string report;  // verify only

  void add(std::string key, double v) { summary.emplace_back(std::move(key), io::number(v)); }
  void add(std::string key, std::string v) { summary.emplace_back(std::move(key), std::move(v)); }
};

// ---------------------------------------------------------------------------
// Output helpers

/// JSON text with every floating-point number at 17 significant digits and
/// non-finite values as null.
inline void dump_json(std::ostream& os, const json& j, int indent = 0) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << json(it.key()).dump() << ": ";
        dump_json(os, it.value(), indent + 2);
      }
      os << "\n" << close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        dump_json(os, j[i], indent + 2);
      }
      os << "\n" << close << "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      os << (std::isfinite(v) ? io::number(v) : "null");
      return;
    }
    default:
      os << j.dump();
  }
}

inline void write_json(const std::string& path, const json& j) {
  auto os = io::open_output(path);
  dump_json(os, j);
  os << '\n';
}

inline std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

inline std::string indexed(const char* stem, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.csv", stem, k);
  return buf;
}

inline void prepare_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::config, "cannot create output directory " + dir);
}

/// Structured record for a failed run.
inline void write_error(const std::string& dir, const Error& e) {
  json j;
  j["kind"] = to_string(e.kind());
  j["message"] = e.what();
  if (e.record()) {
    j["node"] = e.record()->node;
    j["time"] = e.record()->time;
    j["determinant"] = e.record()->determinant;
  }
  write_json(join(dir, "error.json"), j);
}

inline void write_index(const std::string& dir, const std::vector<std::pair<std::string, double>>& files) {
  auto os = io::open_output(join(dir, "fields.csv"));
  io::write_header(os, {"file", "t"});
  for (const auto& [f, t] : files) os << f << ',' << io::number(t) << '\n';
}

/// True when outputs[k-1], outputs[k], outputs[k+1] are evenly spaced.
inline bool centred(const Vec& t, std::size_t k) {
  const double a = t[k] - t[k - 1], b = t[k + 1] - t[k];
  return std::abs(a - b) <= 1e-9 * std::max(a, b);
}

// ---------------------------------------------------------------------------
// Initial data

/// Per-axis vector: a scalar broadcasts, otherwise the length must match.
inline Vec axis_vec(const config::Initial& in, const char* key, std::size_t dim, std::optional<Vec> fallback = {}) {
  Vec v = config::param_vec(in, key, std::move(fallback));
  if (v.size() == 1 && dim > 1) v.assign(dim, v[0]);
  if (v.size() != dim)
    throw Error(ErrorKind::config, "initial.params: '" + std::string(key) + "' needs one entry per axis");
  return v;
}

/// G0 for the manifold and helmholtz pipelines.
inline manifold::InitialVelocity initial_velocity(const config::Config& cfg, const Scenario& sc) {
  const std::size_t n = sc.model.dim;
  const auto& in = cfg.initial;
  if (in.kind == "zero") return [](ConstSpan, MutSpan v) { std::fill(v.begin(), v.end(), 0.0); };
  if (in.kind == "constant") {
    const Vec c = axis_vec(in, "value", n);
    return [c](ConstSpan, MutSpan v) { std::copy(c.begin(), c.end(), v.begin()); };
  }
  if (in.kind == "linear") {
    const Vec a = axis_vec(in, "coefficient", n);
    return [a](ConstSpan x, MutSpan v) {
      for (std::size_t i = 0; i < x.size(); ++i) v[i] = a[i] * x[i];
    };
  }
  if (in.kind == "scenario") {
    if (!sc.reference.velocity) throw Error(ErrorKind::config, "scenario has no canonical initial velocity");
    const auto g = sc.reference.velocity;
    return [g](ConstSpan x, MutSpan v) {
      const Vec r = g(x, 0.0);
      std::copy(r.begin(), r.end(), v.begin());
    };
  }
  throw Error(ErrorKind::config, "initial kind '" + in.kind + "' does not define a velocity field");
}

/// S0 for the hj pipeline, consistent with G0 = grad S0 / m.
inline hj::InitialData initial_action(const config::Config& cfg, const Scenario& sc) {
  const std::size_t n = sc.model.dim;
  const double m = sc.model.mass;
  const auto& in = cfg.initial;
  if (in.kind == "zero") return [](ConstSpan) { return 0.0; };
  if (in.kind == "constant") {
    const Vec c = axis_vec(in, "value", n);
    return [c, m](ConstSpan x) { return m * dot(c, x); };
  }
  if (in.kind == "linear") {
    const Vec a = axis_vec(in, "coefficient", n);
    return [a, m](ConstSpan x) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += a[i] * x[i] * x[i];
      return 0.5 * m * s;
    };
  }
  if (in.kind == "abs") {
    const double scale = config::param(in, "scale", 1.0);
    return [scale](ConstSpan x) {
      double s = 0.0;
      for (double v : x) s += std::abs(v);
      return scale * s;
    };
  }
  if (in.kind == "scenario") {
    if (!sc.reference.initial) throw Error(ErrorKind::config, "scenario has no canonical initial action");
    return sc.reference.initial;
  }
  throw Error(ErrorKind::config, "initial kind '" + in.kind + "' does not define an initial action");
}

// ---------------------------------------------------------------------------
// Pipelines

inline Outcome run_newton(const config::Config& cfg) {
  const auto sc = cfg.make();
  const auto& tm = cfg.need_time();
  const std::size_t n = sc.model.dim;
  const Vec x0 = axis_vec(cfg.initial, "x0", n);
  const Vec v0 = axis_vec(cfg.initial, "v0", n, Vec(n, 0.0));
  const auto traj = newton::integrate(sc.model, x0, v0, tm.t_end, tm.dt);
  prepare_dir(cfg.output_dir);
  {
    auto os = io::open_output(join(cfg.output_dir, "trajectory.csv"));
    io::write_trajectory_csv(os, traj);
  }
  const auto energy = newton::energy_trace(sc.model, traj);
  {
    auto os = io::open_output(join(cfg.output_dir, "energy.csv"));
    io::write_header(os, {"t", "kinetic", "potential", "total", "power_nonconservative"});
    for (const auto& e : energy) io::write_row(os, {e.t, e.kinetic, e.potential, e.total, e.power_nonconservative});
  }
  Outcome out;
  out.add("steps", std::to_string(traj.size() - 1));
  out.add("t_end", traj.times.back());
  for (std::size_t i = 0; i < n; ++i) out.add("x_" + std::to_string(i + 1) + "(t_end)", traj.positions.back()[i]);
  out.add("energy change", energy.back().total - energy.front().total);
  if (sc.reference.trajectory) {
    double gap = 0.0;
    for (std::size_t k = 0; k < traj.size(); ++k) {
      const auto [x, v] = sc.reference.trajectory(x0, v0, traj.times[k]);
      for (std::size_t i = 0; i < n; ++i) gap = std::max(gap, std::abs(x[i] - traj.positions[k][i]));
    }
    out.add("max gap to closed form", gap);
  }
  return out;
}

inline Outcome run_manifold(const config::Config& cfg, const Options& opt) {
  const auto sc = cfg.make();
  const auto& tm = cfg.need_time();
  const Grid grid = cfg.need_domain().grid();
  const auto g0 = initial_velocity(cfg, sc);
  manifold::BuildOptions bo;
  if (opt.seed_factor) bo.seed_factor = *opt.seed_factor;
  Vec times = tm.outputs;
  if (times.front() > 0.0) times.insert(times.begin(), 0.0);
  prepare_dir(cfg.output_dir);
  const auto series = manifold::build_G_series(sc.model, g0, grid, times, tm.dt, bo);

  std::vector<std::pair<std::string, double>> files;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const std::string f = indexed("G", k);
    auto os = io::open_output(join(cfg.output_dir, f));
    io::write_field_csv(os, series[k], "G");
    files.emplace_back(f, series[k].time);
  }
  write_index(cfg.output_dir, files);

  Outcome out;
  out.add("fields", std::to_string(series.size()));
  double worst_residual = 0.0;
  {
    auto os = io::open_output(join(cfg.output_dir, "residual.csv"));
    io::write_header(os, {"t", "max_residual"});
    for (std::size_t k = 1; k + 1 < series.size(); ++k) {
      if (!centred(times, k)) continue;
      const auto r = manifold::residual_G(sc.model, series[k - 1], series[k], series[k + 1], times[k] - times[k - 1]);
      double m = 0.0;
      for (std::size_t nd = 0; nd < grid.size(); ++nd)
        if (is_interior(grid, nd)) m = std::max(m, r.values[nd]);
      worst_residual = std::max(worst_residual, m);
      io::write_row(os, {times[k], m});
    }
  }
  out.add("max interior residual", worst_residual);

  // slaving report from starts at the quarter points of each axis
  const manifold::FieldSeriesProvider provider(series);
  const std::size_t n = grid.dim();
  std::size_t combos = 1;
  for (std::size_t d = 0; d < n; ++d) combos *= 3;
  auto os = io::open_output(join(cfg.output_dir, "slaving.csv"));
  auto cols = io::coordinate_columns(n, "x0");
  cols.push_back("t_end");
  cols.push_back("max_gap");
  io::write_header(os, cols);
  double worst = 0.0;
  for (std::size_t c = 0; c < combos; ++c) {
    Vec x0(n);
    std::size_t r = c;
    for (std::size_t d = 0; d < n; ++d) {
      const auto& a = grid.axis(d);
      x0[d] = a.lower + 0.25 * static_cast<double>(r % 3 + 1) * (a.upper - a.lower);
      r /= 3;
    }
    double gap = std::nan("");
    try {
      gap = manifold::slaving_error(sc.model, std::cref(provider), x0, times.back(), tm.dt);
      worst = std::max(worst, gap);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::domain_exit) throw;
    }
    Vec row = x0;
    row.push_back(times.back());
    row.push_back(gap);
    io::write_row(os, row);
  }
  out.add("max slaving gap", worst);
  return out;
}

inline Outcome run_hj(const config::Config& cfg) {
  const auto sc = cfg.make();
  const auto& tm = cfg.need_time();
  const Grid grid = cfg.need_domain().grid();
  const hj::HJProblem problem(sc.model, initial_action(cfg, sc), grid, tm.t_end, tm.outputs);
  prepare_dir(cfg.output_dir);
  const auto sol = hj::solve_hj(problem, tm.dt);

  std::vector<std::pair<std::string, double>> files;
  for (std::size_t k = 0; k < sol.fields.size(); ++k) {
    const std::string f = indexed("S", k);
    auto os = io::open_output(join(cfg.output_dir, f));
    io::write_field_csv(os, sol.fields[k], "S");
    files.emplace_back(f, sol.fields[k].time);
  }
  write_index(cfg.output_dir, files);

  Outcome out;
  out.add("fields", std::to_string(sol.fields.size()));
  out.add("steps", std::to_string(sol.steps));
  const Vec& t = problem.outputs();
  double worst = 0.0;
  {
    auto os = io::open_output(join(cfg.output_dir, "residual.csv"));
    io::write_header(os, {"t", "max_residual"});
    for (std::size_t k = 1; k + 1 < sol.fields.size(); ++k) {
      if (!centred(t, k)) continue;
      const auto r = hj::residual_hj(sol.fields[k - 1], sol.fields[k], sol.fields[k + 1], sc.model, t[k] - t[k - 1]);
      double m = 0.0;
      for (std::size_t nd = 0; nd < grid.size(); ++nd)
        if (is_interior(grid, nd)) m = std::max(m, std::abs(r.values[nd]));
      worst = std::max(worst, m);
      io::write_row(os, {t[k], m});
    }
  }
  out.add("max interior residual", worst);

  const bool free_flow = !sc.model.potential && !sc.model.potential_gradient && sc.model.nu == 0.0;
  if (free_flow && sol.fields.back().time > 0.0) {
    const auto& S = sol.fields.back();
    double gap = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, grid.size() / 200);
    for (std::size_t nd = 0; nd < grid.size(); nd += stride)
      gap = std::max(gap, std::abs(S.values[nd] - hj::hopf_lax(problem, grid.position(nd), S.time)));
    out.add("max gap to hopf-lax", gap);
  }
  if (sc.reference.action && cfg.initial.kind == "scenario") {
    const auto& S = sol.fields.back();
    double gap = 0.0;
    for (std::size_t nd = 0; nd < grid.size(); ++nd)
      gap = std::max(gap, std::abs(S.values[nd] - sc.reference.action(grid.position(nd), S.time)));
    out.add("max gap to closed form", gap);
  }
  return out;
}

inline Outcome run_helmholtz(const config::Config& cfg, const Options& opt) {
  const auto sc = cfg.make();
  const auto& tm = cfg.need_time();
  const Grid grid = cfg.need_domain().grid();
  const auto g0 = initial_velocity(cfg, sc);
  manifold::BuildOptions bo;
  if (opt.seed_factor) bo.seed_factor = *opt.seed_factor;
  prepare_dir(cfg.output_dir);
  const Vec& times = tm.outputs;
  const auto series = manifold::build_G_series(sc.model, g0, grid, times, tm.dt, bo);
  const auto mode = grid.fully_periodic() || grid.dim() == 1 ? helmholtz::DriftMode::none : helmholtz::DriftMode::affine;

  json rep;
  double recomposition = 0.0, divergence = 0.0, orthogonality = 0.0;
  json curl = json::array();
  std::vector<helmholtz::SRDecomposition> parts;
  std::vector<std::pair<std::string, double>> files;
  for (std::size_t k = 0; k < series.size(); ++k) {
    auto d = helmholtz::decompose(series[k], sc.model.mass, mode);
    recomposition = std::max(recomposition, d.recomposition_error);
    divergence = std::max(divergence, d.divergence_norm);
    orthogonality = std::max(orthogonality, d.orthogonality);
    json entry;
    entry["t"] = series[k].time;
    entry["R_l2"] = helmholtz::l2_norm(d.R);
    if (grid.dim() == 2) {
      double c = 0.0;
      for (double v : helmholtz::curl_diagnostic(series[k]).values) c = std::max(c, std::abs(v));
      entry["curl_max"] = c;
    }
    curl.push_back(entry);
    {
      const std::string f = indexed("S", k);
      auto os = io::open_output(join(cfg.output_dir, f));
      io::write_field_csv(os, d.S, "S");
      files.emplace_back(f, series[k].time);
    }
    {
      const std::string f = indexed("R", k);
      auto os = io::open_output(join(cfg.output_dir, f));
      io::write_field_csv(os, d.R, "R");
      files.emplace_back(f, series[k].time);
    }
    parts.push_back(std::move(d));
  }
  write_index(cfg.output_dir, files);
  rep["recomposition_error"] = recomposition;
  rep["divergence_norm"] = divergence;
  rep["orthogonality"] = orthogonality;
  rep["curl_norms_by_time"] = curl;
  json residuals = json::array();
  for (std::size_t k = 1; k + 1 < parts.size(); ++k) {
    if (!centred(times, k)) continue;
    const auto r = helmholtz::residual_system({parts[k - 1].S, parts[k].S, parts[k + 1].S},
                                              {parts[k - 1].R, parts[k].R, parts[k + 1].R}, sc.model,
                                              times[k] - times[k - 1]);
    json e;
    e["t"] = times[k];
    e["total"] = helmholtz::SystemResidual::max_of(r.total);
    e["scalar"] = helmholtz::SystemResidual::max_of(r.scalar);
    e["coupling"] = helmholtz::SystemResidual::max_of(r.coupling);
    e["force"] = helmholtz::SystemResidual::max_of(r.force);
    e["transport"] = helmholtz::SystemResidual::max_of(r.transport);
    residuals.push_back(e);
  }
  rep["system_residual_by_time"] = residuals;
  write_json(join(cfg.output_dir, "helmholtz.json"), rep);

  Outcome out;
  out.add("drift mode", mode == helmholtz::DriftMode::affine ? "affine" : "none");
  out.add("recomposition error", recomposition);
  out.add("divergence norm", divergence);
  out.add("orthogonality", orthogonality);
  out.add("R l2 first", curl.front()["R_l2"].get<double>());
  out.add("R l2 last", curl.back()["R_l2"].get<double>());
  return out;
}

inline Outcome run_wave(const config::Config& cfg) {
  const auto sc = cfg.make();
  const auto& tm = cfg.need_time();
  const Grid grid = cfg.need_domain().grid();
  const std::size_t n = grid.dim();
  const auto& in = cfg.initial;

  wave::WaveField psi0;
  hj::InitialData phase;
  if (in.kind == "gaussian") {
    const Vec c = axis_vec(in, "center", n);
    const Vec p = axis_vec(in, "momentum", n, Vec(n, 0.0));
    const double sigma = config::param(in, "sigma");
    if (!(sigma > 0.0)) throw Error(ErrorKind::config, "initial.params: 'sigma' must be positive");
    phase = [c, p](ConstSpan x) {
      double s = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) s += p[i] * (x[i] - c[i]);
      return s;
    };
    psi0 = wave::from_amplitude_phase(
        grid,
        [c, sigma](ConstSpan x) {
          double r2 = 0.0;
          for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - c[i]) * (x[i] - c[i]);
          return std::exp(-r2 / (2.0 * sigma * sigma));
        },
        phase, cfg.h);
  } else if (in.kind == "plane_wave") {
    const Vec k = axis_vec(in, "k", n);
    psi0 = wave::plane_wave(grid, k, cfg.h);
    phase = [k, h = cfg.h](ConstSpan x) { return h * dot(k, x); };
  } else {
    throw Error(ErrorKind::config, "wave pipeline needs initial kind 'gaussian' or 'plane_wave'");
  }

  prepare_dir(cfg.output_dir);
  Vec positive;
  for (double t : tm.outputs)
    if (t > 0.0) positive.push_back(t);
  std::vector<wave::WaveField> snaps;
  if (tm.outputs.front() == 0.0) snaps.push_back(psi0);
  if (!positive.empty())
    for (auto& w : wave::evolve(psi0, sc.model, tm.dt, positive)) snaps.push_back(std::move(w));

  std::vector<std::pair<std::string, double>> files;
  double drift = 0.0;
  const double norm0 = psi0.norm();
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    const auto& w = snaps[k];
    if (w.time > 0.0) drift = std::max(drift, std::abs(w.norm() - norm0) / norm0 / w.time);
    const std::string f = indexed("psi", k);
    auto os = io::open_output(join(cfg.output_dir, f));
    auto cols = io::coordinate_columns(n);
    for (const char* c : {"re", "im", "abs", "phase"}) cols.push_back(c);
    io::write_header(os, cols);
    for (std::size_t nd = 0; nd < grid.size(); ++nd) {
      Vec row = grid.position(nd);
      const auto z = w.values[nd];
      const double ph = std::abs(z) > 0.0 ? wave::principal_arctan(z.real(), z.imag()) : std::nan("");
      row.insert(row.end(), {z.real(), z.imag(), std::abs(z), ph});
      io::write_row(os, row);
    }
    files.emplace_back(f, w.time);
  }
  write_index(cfg.output_dir, files);

  Outcome out;
  out.add("snapshots", std::to_string(snaps.size()));
  out.add("norm drift per unit time", drift);

  // semiclassical comparison against the Hamilton-Jacobi sheet with the same phase
  bool scalar_model = !sc.model.nongradient && !sc.model.velocity_potential && !sc.model.velocity_potential_gradient;
  if (scalar_model && !positive.empty()) {
    std::vector<wave::WaveField> psi;
    for (const auto& w : snaps)
      if (w.time > 0.0) psi.push_back(w);
    const auto S = hj::solve_hj(hj::HJProblem(sc.model, phase, grid.as_open(), positive.back(), positive), tm.dt);
    const auto r = wave::semiclassical_gap(psi, S.fields, sc.model.mass);
    json j;
    j["h"] = cfg.h;
    j["times"] = r.times;
    j["max_gaps"] = r.max_gaps;
    j["l2_gaps"] = r.l2_gaps;
    j["max_gap"] = r.max_gap;
    j["l2_gap"] = r.l2_gap;
    j["residual_gradient"] = r.residual_gradient;
    j["residual_hessian"] = r.residual_hessian;
    j["residual_time"] = r.residual_time;
    j["masked_nodes"] = r.masked_nodes;
    write_json(join(cfg.output_dir, "semiclassical.json"), j);
    out.add("semiclassical l2 gap", r.l2_gap);
    out.add("semiclassical max gap", r.max_gap);
  }
  return out;
}

inline Outcome run_action(const config::Config& cfg) {
  const auto sc = cfg.make();
  const auto& tm = cfg.need_time();
  const Grid grid = cfg.need_domain().grid();
  const std::size_t n = grid.dim();
  const auto spec = action::lagrangian_of(sc.model);
  const Vec x0 = axis_vec(cfg.initial, "x0", n, Vec(n, 0.0));
  const double t0 = config::param(cfg.initial, "t0", 0.0);
  action::SheetOptions so;
  so.shoot.dt = tm.dt;
  so.branch = static_cast<int>(config::param(cfg.initial, "branch", 0.0));
  if (cfg.initial.params.contains("seed_velocity")) so.seed_velocity = axis_vec(cfg.initial, "seed_velocity", n);
  prepare_dir(cfg.output_dir);
  const auto sh = action::build_sheet(spec, x0, t0, grid, tm.outputs, so);

  {
    auto os = io::open_output(join(cfg.output_dir, "sheet.csv"));
    auto cols = io::coordinate_columns(n);
    cols.push_back("t");
    cols.push_back("S");
    for (auto& c : io::coordinate_columns(n, "V")) cols.push_back(c);
    cols.push_back("smooth");
    cols.push_back("branch");
    io::write_header(os, cols);
    for (std::size_t row = 0; row < sh.times.size(); ++row)
      for (std::size_t nd = 0; nd < grid.size(); ++nd) {
        const std::size_t id = sh.index(row, nd);
        Vec r = grid.position(nd);
        r.push_back(sh.times[row]);
        r.push_back(sh.converged[id] ? sh.S[id] : std::nan(""));
        for (std::size_t i = 0; i < n; ++i) r.push_back(sh.converged[id] ? sh.velocity[id * n + i] : std::nan(""));
        r.push_back(sh.smooth[id] ? 1.0 : 0.0);
        r.push_back(static_cast<double>(sh.branch));
        io::write_row(os, r);
      }
  }
  const auto res = action::hj_residual_of_sheet(spec, sh);
  {
    auto os = io::open_output(join(cfg.output_dir, "sheet_residual.csv"));
    auto cols = io::coordinate_columns(n);
    cols.push_back("t");
    cols.push_back("residual");
    io::write_header(os, cols);
    for (std::size_t row = 0; row < sh.times.size(); ++row)
      for (std::size_t nd = 0; nd < grid.size(); ++nd) {
        const double v = res.values[sh.index(row, nd)];
        if (std::isnan(v)) continue;
        Vec r = grid.position(nd);
        r.push_back(sh.times[row]);
        r.push_back(v);
        io::write_row(os, r);
      }
  }
  Outcome out;
  out.add("rows completed", std::to_string(sh.truncated_row) + "/" + std::to_string(sh.times.size()));
  if (!sh.truncation_reason.empty()) out.add("truncation", sh.truncation_reason);
  out.add("residual nodes", std::to_string(res.evaluated));
  out.add("max sheet residual", res.max);
  return out;
}

inline Outcome run_verify(const config::Config& cfg) {
  prepare_dir(cfg.output_dir);
  const auto rep = verify::run_all();
  Outcome out;
  out.report = verify::render(rep);
  {
    auto os = io::open_output(join(cfg.output_dir, "verify_report.txt"));
    os << out.report;
  }
  std::size_t passed = 0;
  for (const auto& r : rep.rows) passed += r.pass() ? 1 : 0;
  out.add("criteria passed", std::to_string(passed) + "/" + std::to_string(rep.rows.size()));
  out.exit_code = rep.pass() ? 0 : 5;
  return out;
}

inline Outcome run(const std::string& pipeline, const config::Config& cfg, const Options& opt = {}) {
  if (pipeline == "newton") return run_newton(cfg);
  if (pipeline == "manifold") return run_manifold(cfg, opt);
  if (pipeline == "hj") return run_hj(cfg);
  if (pipeline == "helmholtz") return run_helmholtz(cfg, opt);
  if (pipeline == "wave") return run_wave(cfg);
  if (pipeline == "action") return run_action(cfg);
  if (pipeline == "verify") return run_verify(cfg);
  throw Error(ErrorKind::config, "unknown pipeline '" + pipeline + "'");
}

/// Exit code for a library error.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::fold:
    case ErrorKind::coverage:
      return 4;
    case ErrorKind::divergence:
    case ErrorKind::no_convergence:
    case ErrorKind::conjugate_point:
    case ErrorKind::domain_exit:
    case ErrorKind::vacuum_node:
      return 3;
    default:
      return 2;
  }
}

}  // namespace hjreduce::pipelines
