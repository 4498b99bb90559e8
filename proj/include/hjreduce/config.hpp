#pragma once

// Scenario configuration read from JSON. Every schema problem surfaces as a
// config error.

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjreduce/core.hpp"
#include "hjreduce/model.hpp"

namespace hjreduce::config {

using json = nlohmann::json;

struct Domain {
  Vec min, max;
  std::vector<std::size_t> points;
  std::vector<bool> periodic;

  Grid grid() const {
    std::vector<Axis> axes;
    for (std::size_t d = 0; d < min.size(); ++d) axes.push_back(Axis{min[d], max[d], points[d], periodic[d]});
    return Grid(std::move(axes));
  }
};

struct Time {
  double t_end = 1.0;
  double dt = 1e-3;
  Vec outputs;
};

struct Initial {
  std::string kind = "scenario";
  json params = json::object();
};

struct Config {
  std::string scenario;
  std::string module;
  std::optional<std::size_t> dim;
  std::optional<double> mass;
  std::optional<double> nu;
  double h = 1.0;
  std::optional<Domain> domain;
  std::optional<Time> time;
  Initial initial;
  std::string output_dir = "hjreduce_out";

  Scenario make() const {
    return make_scenario(scenario, ScenarioOverrides{dim, mass, nu});
  }

  const Domain& need_domain() const {
    if (!domain) throw Error(ErrorKind::config, "config needs a domain block");
    return *domain;
  }

  const Time& need_time() const {
    if (!time) throw Error(ErrorKind::config, "config needs a time block");
    return *time;
  }
};

inline const std::vector<std::string>& modules() {
  static const std::vector<std::string> names = {"newton", "manifold", "hj", "helmholtz", "wave", "action", "verify"};
  return names;
}

namespace detail {

template <class T>
T get(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw Error(ErrorKind::config, where + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, where + ": '" + key + "' has the wrong type");
  }
}

template <class T>
std::optional<T> maybe(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get<T>(j, key, where);
}

}  // namespace detail

/// Vector parameter `key` of the initial block, or `fallback` when absent.
inline Vec param_vec(const Initial& in, const char* key, std::optional<Vec> fallback = std::nullopt) {
  if (!in.params.contains(key)) {
    if (fallback) return *fallback;
    throw Error(ErrorKind::config, "initial.params: missing '" + std::string(key) + "'");
  }
  const json& v = in.params.at(key);
  try {
    if (v.is_number()) return Vec{v.get<double>()};
    return v.get<Vec>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, "initial.params: '" + std::string(key) + "' must be a number or array");
  }
}

inline double param(const Initial& in, const char* key, std::optional<double> fallback = std::nullopt) {
  if (!in.params.contains(key)) {
    if (fallback) return *fallback;
    throw Error(ErrorKind::config, "initial.params: missing '" + std::string(key) + "'");
  }
  try {
    return in.params.at(key).get<double>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, "initial.params: '" + std::string(key) + "' must be a number");
  }
}

inline Config parse(const json& j) {
  using detail::get;
  using detail::maybe;
  if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");
  Config c;
  c.module = get<std::string>(j, "module", "config");
  if (std::find(modules().begin(), modules().end(), c.module) == modules().end())
    throw Error(ErrorKind::config, "config: unknown module '" + c.module + "'");
  c.scenario = maybe<std::string>(j, "scenario", "config").value_or("");
  if (c.module != "verify" && c.scenario.empty()) throw Error(ErrorKind::config, "config: missing 'scenario'");
  c.dim = maybe<std::size_t>(j, "dim", "config");
  c.mass = maybe<double>(j, "mass", "config");
  c.nu = maybe<double>(j, "nu", "config");
  c.h = maybe<double>(j, "h", "config").value_or(1.0);
  if (!(c.h > 0.0)) throw Error(ErrorKind::config, "config: 'h' must be positive");
  c.output_dir = maybe<std::string>(j, "output_dir", "config").value_or(c.output_dir);

  if (j.contains("domain")) {
    const json& d = j.at("domain");
    Domain dom;
    dom.min = get<Vec>(d, "min", "domain");
    dom.max = get<Vec>(d, "max", "domain");
    dom.points = get<std::vector<std::size_t>>(d, "points", "domain");
    const std::size_t n = dom.min.size();
    dom.periodic = d.contains("periodic") ? get<std::vector<bool>>(d, "periodic", "domain") : std::vector<bool>(n, false);
    if (n == 0 || dom.max.size() != n || dom.points.size() != n || dom.periodic.size() != n)
      throw Error(ErrorKind::config, "domain: min, max, points and periodic need one entry per axis");
    if (c.dim && *c.dim != n) throw Error(ErrorKind::config, "domain: axis count differs from 'dim'");
    if (!c.dim) c.dim = n;
    dom.grid();  // validates bounds and point counts
    c.domain = std::move(dom);
  }

  if (j.contains("time")) {
    const json& t = j.at("time");
    Time tm;
    tm.t_end = get<double>(t, "t_end", "time");
    tm.dt = maybe<double>(t, "dt", "time").value_or(tm.dt);
    tm.outputs = maybe<Vec>(t, "outputs", "time").value_or(Vec{tm.t_end});
    if (!(tm.t_end > 0.0) || !(tm.dt > 0.0)) throw Error(ErrorKind::config, "time: t_end and dt must be positive");
    for (double o : tm.outputs)
      if (!(o >= 0.0 && o <= tm.t_end)) throw Error(ErrorKind::config, "time: outputs must lie in [0, t_end]");
    std::sort(tm.outputs.begin(), tm.outputs.end());
    tm.outputs.erase(std::unique(tm.outputs.begin(), tm.outputs.end()), tm.outputs.end());
    c.time = std::move(tm);
  }

  if (j.contains("initial")) {
    const json& in = j.at("initial");
    c.initial.kind = get<std::string>(in, "kind", "initial");
    if (in.contains("params")) {
      if (!in.at("params").is_object()) throw Error(ErrorKind::config, "initial: 'params' must be an object");
      c.initial.params = in.at("params");
    }
  }

  if (c.module != "verify") c.make();  // unknown scenarios and bad overrides fail here
  return c;
}

inline Config load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::config, "cannot read config " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "config " + path + " is not valid JSON: " + e.what());
  }
  return parse(j);
}

}  // namespace hjreduce::config
