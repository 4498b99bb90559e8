#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "hjreduce/config.hpp"
#include "hjreduce/pipelines.hpp"

namespace fs = std::filesystem;
using namespace hjreduce;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hjreduce_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json shipped(const std::string& name) {
  std::ifstream is(fs::path(HJREDUCE_SOURCE_DIR) / "configs" / name);
  REQUIRE(is);
  return json::parse(is);
}

/// Copy of a shipped config redirected into `dir`.
fs::path redirect(const std::string& name, const fs::path& dir) {
  json j = shipped(name);
  j["output_dir"] = (dir / "out").string();
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HJREDUCE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

config::Config parsed(const std::string& name, const fs::path& dir) {
  json j = shipped(name);
  j["output_dir"] = (dir / "out").string();
  return config::parse(j);
}

ErrorKind kind_of(const json& j) {
  try {
    config::parse(j);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::not_applicable;
}

}  // namespace

TEST_CASE("config schema", "[cli]") {
  const json good = shipped("harmonic_manifold.json");
  const auto cfg = config::parse(good);
  CHECK(cfg.scenario == "harmonic");
  CHECK(cfg.module == "manifold");
  CHECK(cfg.domain->grid().size() == 81);
  CHECK(cfg.time->outputs.size() == 5);
  CHECK(cfg.initial.kind == "zero");

  auto broken = [&](auto&& edit) {
    json j = good;
    edit(j);
    return kind_of(j);
  };
  CHECK(broken([](json& j) { j.erase("module"); }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["module"] = "plot"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["scenario"] = "pendulum"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["domain"]["points"] = json::array({81, 81}); }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["domain"]["points"] = json::array({2}); }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["dim"] = 2; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["mass"] = "heavy"; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["mass"] = -1.0; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["time"]["outputs"] = json::array({2.0}); }) == ErrorKind::config);
  CHECK(broken([](json& j) { j["h"] = 0.0; }) == ErrorKind::config);
  CHECK(broken([](json& j) { j = json::array(); }) == ErrorKind::config);
  CHECK_THROWS_AS(config::load("/nonexistent/config.json"), Error);

  for (const auto& entry : fs::directory_iterator(fs::path(HJREDUCE_SOURCE_DIR) / "configs")) {
    INFO(entry.path());
    std::ifstream is(entry.path());
    CHECK_NOTHROW(config::parse(json::parse(is)));
  }
}

TEST_CASE("json output uses 17 significant digits", "[cli]") {
  std::ostringstream os;
  pipelines::dump_json(os, json{{"a", 0.1}, {"b", std::nan("")}, {"c", 3}});
  CHECK(os.str().find("0.10000000000000001") != std::string::npos);
  CHECK(os.str().find("null") != std::string::npos);
  CHECK(os.str().find("\"c\": 3") != std::string::npos);
}

TEST_CASE("harmonic manifold run", "[cli]") {
  const auto dir = scratch("manifold");
  const auto cfg = redirect("harmonic_manifold.json", dir);
  REQUIRE(cli("run --config " + cfg.string(), dir / "log.txt") == 0);
  for (const char* f : {"G_000.csv", "G_004.csv", "fields.csv", "slaving.csv", "residual.csv"})
    CHECK(fs::exists(dir / "out" / f));
  CHECK(slurp(dir / "log.txt").find("max slaving gap") != std::string::npos);
  // G(x, 1) = -x tan 1 at x = 1
  std::ifstream is(dir / "out" / "G_004.csv");
  std::string line, last;
  while (std::getline(is, line)) last = line;
  const auto comma = last.find(',');
  CHECK(std::stod(last.substr(0, comma)) == 1.0);
  CHECK(std::stod(last.substr(comma + 1)) == Catch::Approx(-std::tan(1.0)).epsilon(1e-6));
}

TEST_CASE("caustic exits with the fold code", "[cli]") {
  const auto dir = scratch("caustic");
  const auto cfg = redirect("harmonic_caustic.json", dir);
  REQUIRE(cli("manifold --config " + cfg.string(), dir / "log.txt") == 4);
  const json err = json::parse(slurp(dir / "out" / "error.json"));
  CHECK(err["kind"] == "fold");
  CHECK(std::abs(err["time"].get<double>() - std::numbers::pi / 2) <= 0.02);
  CHECK(slurp(dir / "log.txt").find("fold") != std::string::npos);
}

TEST_CASE("exit codes for bad input", "[cli]") {
  const auto dir = scratch("bad");
  CHECK(cli("run --config " + (dir / "missing.json").string(), dir / "log.txt") == 2);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK(cli("run --config " + (dir / "broken.json").string(), dir / "log.txt") == 2);
  CHECK(cli("run", dir / "log.txt") == 2);
  CHECK(cli("launch --config x.json", dir / "log.txt") == 2);
  CHECK(cli("--help", dir / "log.txt") == 0);
  // a scenario the scalar solver cannot take
  json j = shipped("curl2d_helmholtz.json");
  j["module"] = "hj";
  j["output_dir"] = (dir / "out").string();
  std::ofstream(dir / "curl_hj.json") << j.dump();
  CHECK(cli("run --config " + (dir / "curl_hj.json").string(), dir / "log.txt") == 2);
}

TEST_CASE("reruns are byte identical", "[cli][property]") {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  REQUIRE(cli("run --quiet --config " + redirect("harmonic_manifold.json", a).string(), a / "log.txt") == 0);
  REQUIRE(cli("run --quiet --config " + redirect("harmonic_manifold.json", b).string(), b / "log.txt") == 0);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a / "out")) {
    CHECK(slurp(entry.path()) == slurp(b / "out" / entry.path().filename()));
    ++compared;
  }
  CHECK(compared >= 5);
  CHECK(slurp(a / "log.txt").empty());
}

TEST_CASE("seed factor option", "[cli]") {
  const auto dir = scratch("seed");
  const auto cfg = redirect("harmonic_manifold.json", dir);
  CHECK(cli("manifold --seed-factor 3 --config " + cfg.string(), dir / "log.txt") == 0);
  CHECK(cli("manifold --seed-factor 0 --config " + cfg.string(), dir / "log.txt") == 2);
}

TEST_CASE("in-process pipelines", "[cli]") {
  SECTION("newton") {
    const auto dir = scratch("newton");
    const auto out = pipelines::run("newton", parsed("damped_harmonic_newton.json", dir));
    CHECK(fs::exists(dir / "out" / "trajectory.csv"));
    CHECK(fs::exists(dir / "out" / "energy.csv"));
    for (const auto& [k, v] : out.summary)
      if (k == "max gap to closed form") CHECK(std::stod(v) <= 1e-10);
  }
  SECTION("hj") {
    const auto dir = scratch("hj");
    const auto out = pipelines::run("hj", parsed("riccati_hj.json", dir));
    bool seen = false;
    for (const auto& [k, v] : out.summary)
      if (k == "max gap to closed form") {
        seen = true;
        CHECK(std::stod(v) <= 1e-3);
      }
    CHECK(seen);
    CHECK(fs::exists(dir / "out" / "S_002.csv"));
  }
  SECTION("helmholtz") {
    const auto dir = scratch("helmholtz");
    pipelines::run("helmholtz", parsed("curl2d_helmholtz.json", dir));
    const json rep = json::parse(slurp(dir / "out" / "helmholtz.json"));
    CHECK(rep["recomposition_error"].get<double>() <= 1e-10);
    CHECK(rep["divergence_norm"].get<double>() <= 1e-10);
    CHECK(rep["curl_norms_by_time"].size() == 4);
    CHECK(rep["system_residual_by_time"].size() == 1);
    CHECK(rep["curl_norms_by_time"][3]["R_l2"].get<double>() > 100.0 * rep["curl_norms_by_time"][0]["R_l2"].get<double>());
  }
  SECTION("wave") {
    const auto dir = scratch("wave");
    const auto out = pipelines::run("wave", parsed("packet_wave.json", dir));
    const json rep = json::parse(slurp(dir / "out" / "semiclassical.json"));
    CHECK(rep["l2_gaps"].size() == 4);
    CHECK(rep["l2_gap"].get<double>() < 0.05);
    const auto header = slurp(dir / "out" / "psi_000.csv").substr(0, 20);
    CHECK(header.rfind("x_1,re,im,abs,phase", 0) == 0);
  }
  SECTION("action") {
    const auto dir = scratch("action");
    const auto out = pipelines::run("action", parsed("harmonic_sheet.json", dir));
    bool truncated = false;
    for (const auto& [k, v] : out.summary)
      if (k == "truncation") truncated = v.find("conjugate") != std::string::npos;
    CHECK(truncated);
    CHECK(slurp(dir / "out" / "sheet.csv").rfind("x_1,t,S,V_1,smooth,branch", 0) == 0);
  }
}
