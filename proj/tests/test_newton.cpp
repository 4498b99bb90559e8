#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "hjreduce/io.hpp"
#include "hjreduce/newton.hpp"
#include "oracles.hpp"

using namespace hjreduce;
using Catch::Approx;

TEST_CASE("free particle moves uniformly", "[newton]") {
  const auto sc = make_scenario("free");
  const auto tr = newton::integrate(sc.model, Vec{0.0}, Vec{1.0}, 1.0, 1e-3);
  CHECK(tr.times.back() == 1.0);
  CHECK(tr.positions.back()[0] == Approx(1.0).epsilon(1e-14));
  CHECK(tr.velocities.back()[0] == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("damped free particle", "[newton]") {
  const auto sc = make_scenario("damped_free");
  const auto tr = newton::integrate(sc.model, Vec{1.0}, Vec{1.0}, 1.0, 1e-3);
  CHECK(tr.positions.back()[0] == Approx(oracle::two_minus_inv_e).epsilon(1e-12));
  CHECK(tr.velocities.back()[0] == Approx(oracle::inv_e).epsilon(1e-12));
}

TEST_CASE("harmonic quarter period", "[newton]") {
  const auto sc = make_scenario("harmonic");
  const auto tr = newton::integrate(sc.model, Vec{1.0}, Vec{0.0}, std::numbers::pi / 2, 1e-3);
  CHECK(std::abs(tr.positions.back()[0]) <= 1e-8);
  CHECK(std::abs(tr.velocities.back()[0] + 1.0) <= 1e-8);
}

TEST_CASE("damped harmonic matches the frozen closed form", "[newton]") {
  const auto sc = make_scenario("damped_harmonic");
  const auto tr = newton::integrate(sc.model, Vec{1.0}, Vec{0.0}, 1.0, 1e-3);
  CHECK(tr.positions.back()[0] == Approx(oracle::damped_harmonic_x1).epsilon(1e-11));
  CHECK(tr.velocities.back()[0] == Approx(oracle::damped_harmonic_v1).epsilon(1e-11));
}

TEST_CASE("last step is shortened to land on t_end", "[newton]") {
  const auto sc = make_scenario("free");
  const auto tr = newton::integrate(sc.model, Vec{0.0}, Vec{1.0}, 0.25, 0.1);
  REQUIRE(tr.size() == 4);
  CHECK(tr.times[1] == Approx(0.1));
  CHECK(tr.times[2] == Approx(0.2));
  CHECK(tr.times[3] == 0.25);
}

TEST_CASE("integration errors", "[newton]") {
  const auto sc = make_scenario("free");
  CHECK_THROWS_AS(newton::integrate(sc.model, Vec{0.0}, Vec{1.0}, 1.0, 0.0), Error);
  CHECK_THROWS_AS(newton::integrate(sc.model, Vec{0.0}, Vec{1.0}, -1.0, 0.1), Error);
  CHECK_THROWS_AS(newton::integrate(sc.model, Vec{0.0, 1.0}, Vec{1.0}, 1.0, 0.1), Error);

  ForceModel blowup;
  blowup.potential_gradient = [](ConstSpan x, MutSpan g) { g[0] = -std::exp(x[0] * x[0]); };
  try {
    newton::integrate(blowup, Vec{3.0}, Vec{5.0}, 10.0, 1e-2);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::divergence);
    REQUIRE(e.record());
    CHECK(e.record()->time > 0.0);
    CHECK(e.record()->time < 10.0);
  }
}

TEST_CASE("fourth-order convergence", "[newton][property]") {
  // free motion is integrated exactly, so only roundoff remains there
  {
    const auto sc = make_scenario("free");
    const auto tr = newton::integrate(sc.model, Vec{0.2}, Vec{0.7}, 1.0, 0.1);
    CHECK(std::abs(tr.positions.back()[0] - 0.9) <= 1e-14);
  }
  for (const char* name : {"damped_free", "harmonic", "damped_harmonic"}) {
    const auto sc = make_scenario(name);
    auto err = [&](double dt) {
      const auto tr = newton::integrate(sc.model, Vec{1.0}, Vec{0.5}, 2.0, dt);
      double worst = 0.0;
      for (std::size_t k = 0; k < tr.size(); ++k) {
        auto [x, v] = sc.reference.trajectory(Vec{1.0}, Vec{0.5}, tr.times[k]);
        worst = std::max(worst, std::abs(tr.positions[k][0] - x[0]));
      }
      return worst;
    };
    const double ratio = err(0.1) / err(0.05);
    INFO(name << " ratio " << ratio);
    CHECK(ratio >= 16.0 * 0.7);
    CHECK(ratio <= 16.0 * 1.3);
  }
}

TEST_CASE("time reversal on conservative scenarios", "[newton][property]") {
  for (const char* name : {"free", "harmonic"}) {
    const auto sc = make_scenario(name);
    const Vec x0{0.4}, v0{-0.3};
    const auto fwd = newton::integrate(sc.model, x0, v0, 1.0, 1e-3);
    Vec vb = fwd.velocities.back();
    for (double& v : vb) v = -v;
    const auto back = newton::integrate(sc.model, fwd.positions.back(), vb, 1.0, 1e-3);
    CHECK(std::abs(back.positions.back()[0] - x0[0]) <= 1e-6);
  }
}

TEST_CASE("energy conservation and power identity", "[newton][energy]") {
  {
    const auto sc = make_scenario("harmonic");
    const auto tr = newton::integrate(sc.model, Vec{1.0}, Vec{0.3}, 10.0, 1e-3);
    const auto e = newton::energy_trace(sc.model, tr);
    double drift = 0.0;
    for (const auto& s : e) drift = std::max(drift, std::abs(s.total - e.front().total));
    CHECK(drift <= 1e-8);
    CHECK(e.front().kinetic == Approx(0.5 * 0.09));
    CHECK(e.front().potential == Approx(0.5));
  }
  {
    const auto sc = make_scenario("free");
    const auto tr = newton::integrate(sc.model, Vec{1.0}, Vec{0.3}, 2.0, 1e-2);
    const auto e = newton::energy_trace(sc.model, tr);
    for (const auto& s : e) CHECK(s.total == Approx(e.front().total).epsilon(1e-15));
  }
  {
    const auto sc = make_scenario("damped_free");
    const auto tr = newton::integrate(sc.model, Vec{1.0}, Vec{1.0}, 2.0, 1e-3);
    const auto e = newton::energy_trace(sc.model, tr);
    for (std::size_t k = 1; k < e.size(); ++k) CHECK(e[k].total <= e[k - 1].total);
    // d(total)/dt = power: trapezoid over the trace
    double integral = 0.0;
    for (std::size_t k = 1; k < e.size(); ++k)
      integral += 0.5 * (e[k].t - e[k - 1].t) * (e[k].power_nonconservative + e[k - 1].power_nonconservative);
    CHECK(e.back().total - e.front().total == Approx(integral).margin(1e-6));
    CHECK(e.front().power_nonconservative == Approx(-1.0));
  }
  CHECK_THROWS_AS(newton::energy_trace(make_scenario("free").model, Trajectory{}), Error);
}

TEST_CASE("trajectory CSV layout", "[newton][io]") {
  const auto sc = make_scenario("curl2d");
  const auto tr = newton::integrate(sc.model, Vec{1.0, 0.0}, Vec{0.0, 0.5}, 0.2, 0.1);
  std::ostringstream os;
  io::write_trajectory_csv(os, tr);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  CHECK(header == "t,x_1,x_2,v_1,v_2");
  std::getline(is, row);
  CHECK(row == "0,1,0,0,0.5");
}
