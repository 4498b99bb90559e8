#include <catch_amalgamated.hpp>

#include <atomic>
#include <cmath>
#include <numbers>

#include "hjreduce/core.hpp"
#include "hjreduce/io.hpp"
#include "hjreduce/model.hpp"
#include "hjreduce/parallel.hpp"
#include "oracles.hpp"

using namespace hjreduce;
using Catch::Approx;

TEST_CASE("grid spacing and coordinates", "[core]") {
  const Grid open = Grid::line(-1.0, 1.0, 5);
  CHECK(open.spacing(0) == Approx(0.5));
  CHECK(open.coordinate(4, 0) == Approx(1.0));

  const Grid per = Grid::line(0.0, 2.0 * std::numbers::pi, 8, true);
  CHECK(per.spacing(0) == Approx(std::numbers::pi / 4));
  CHECK(per.fully_periodic());
  CHECK_FALSE(per.as_open().periodic(0));
  CHECK(per.as_open().same_nodes(per));
  CHECK_FALSE(per.as_open() == per);
}

TEST_CASE("row-major flat indexing round-trips", "[core]") {
  const Grid g({Axis{0, 1, 3, false}, Axis{0, 1, 4, false}, Axis{0, 1, 5, true}});
  REQUIRE(g.size() == 60);
  for (std::size_t n = 0; n < g.size(); ++n) CHECK(g.flat_index(g.multi_index(n)) == n);
  CHECK(g.stride(2) == 1);
  CHECK(g.stride(0) == 20);
}

TEST_CASE("multilinear interpolation is exact on affine data", "[core]") {
  const Grid g = Grid::square(-1.0, 1.0, 7);
  Vec data(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) data[n] = 2.0 * g.coordinate(n, 0) - 3.0 * g.coordinate(n, 1) + 0.5;
  Vec out(1);
  const Vec x{0.123, -0.77};
  REQUIRE(interpolate(g, data, 1, x, out));
  CHECK(out[0] == Approx(2.0 * 0.123 + 3.0 * 0.77 + 0.5).epsilon(1e-13));
  const Vec outside{1.5, 0.0};
  CHECK_FALSE(interpolate(g, data, 1, outside, out));
}

TEST_CASE("periodic interpolation wraps", "[core]") {
  const Grid g = Grid::line(0.0, 1.0, 10, true);
  Vec data(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) data[n] = static_cast<double>(n);
  Vec out(1);
  const Vec x{0.95};  // between node 9 (value 9) and node 0 (value 0)
  REQUIRE(interpolate(g, data, 1, x, out));
  CHECK(out[0] == Approx(4.5));
  const Vec shifted{1.95};
  REQUIRE(interpolate(g, data, 1, shifted, out));
  CHECK(out[0] == Approx(4.5));
}

TEST_CASE("grid derivative is second order and exact on quadratics", "[core]") {
  const Grid g = Grid::line(-1.0, 1.0, 11);
  Vec q(g.size());
  for (std::size_t n = 0; n < g.size(); ++n) q[n] = g.coordinate(n, 0) * g.coordinate(n, 0);
  const Vec d = grid_derivative(g, q, 0);
  for (std::size_t n = 0; n < g.size(); ++n) CHECK(d[n] == Approx(2.0 * g.coordinate(n, 0)).margin(1e-12));
}

TEST_CASE("trajectory rejects non-increasing times", "[core]") {
  Trajectory t;
  const Vec x{0.0};
  t.push(0.0, x, x);
  CHECK_THROWS_AS(t.push(0.0, x, x), Error);
}

TEST_CASE("parallel_for visits every index once and reports the lowest failure", "[core]") {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; }, 1);
  for (auto& h : hits) CHECK(h.load() == 1);

  try {
    parallel_for(1000, [](std::size_t i) {
      if (i == 517 || i == 901) throw Error(ErrorKind::divergence, std::to_string(i));
    }, 1);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "517");
  }
}

TEST_CASE("force model validation", "[model]") {
  ForceModel m;
  m.mass = 0.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m.mass = 1.0;
  m.nu = -1.0;
  CHECK_THROWS_AS(m.validate(), Error);
  CHECK_THROWS_AS(make_scenario("nope"), Error);
  CHECK_THROWS_AS(make_scenario("curl2d", {.dim = 3}), Error);
}

TEST_CASE("finite-difference gradients agree with closed forms", "[model][property]") {
  for (const auto& name : scenario_names()) {
    auto sc = make_scenario(name);
    ForceModel numeric = sc.model;
    numeric.potential_gradient = nullptr;
    numeric.velocity_potential_gradient = nullptr;
    const std::size_t n = sc.model.dim;
    for (int probe = 0; probe < 20; ++probe) {
      Vec x(n), v(n);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = std::sin(1.3 * probe + i) * 1.7;
        v[i] = std::cos(0.7 * probe + 2.0 * i) + 0.1;
      }
      const Vec a = total_force(sc.model, x, v, 0.3);
      const Vec b = total_force(numeric, x, v, 0.3);
      for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == Approx(b[i]).margin(1e-8));
    }
  }
}

TEST_CASE("projector velocity potential has zero x-gradient along the velocity", "[model]") {
  auto sc = make_scenario("projector2d");
  const Vec x{0.3, -0.4}, v{0.6, 0.8};
  Vec g(2);
  velocity_potential_gradient(sc.model, x, v, 0.0, g);
  CHECK(g[0] * v[0] + g[1] * v[1] == Approx(0.0).margin(1e-15));
  const Vec zero{0.0, 0.0};
  velocity_potential_gradient(sc.model, x, zero, 0.0, g);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("curl2d force is not a gradient", "[model]") {
  auto sc = make_scenario("curl2d");
  // d f_1 / d x_2 - d f_2 / d x_1 = 1 - (-1) = 2
  const Vec v{0.0, 0.0};
  const Vec a = total_force(sc.model, Vec{0.0, 1.0}, v, 0.0);
  const Vec b = total_force(sc.model, Vec{1.0, 0.0}, v, 0.0);
  CHECK(a[0] - b[1] == Approx(2.0));
}

TEST_CASE("scenario references satisfy their own initial data", "[model]") {
  for (const auto& name : {"free", "damped_free", "harmonic", "damped_harmonic"}) {
    auto sc = make_scenario(name);
    const Vec x{0.7};
    CHECK(sc.reference.action(x, 0.0) == Approx(sc.reference.initial(x)).margin(1e-15));
  }
  CHECK(detail::riccati_coefficient(1.0, 1.0, 1.0) == Approx(oracle::riccati_a1).epsilon(1e-14));
  auto [x, v] = detail::damped_oscillator(1.0, 0.0, 1.0, 0.5, 1.0);
  CHECK(x == Approx(oracle::damped_harmonic_x1).epsilon(1e-14));
  CHECK(v == Approx(oracle::damped_harmonic_v1).epsilon(1e-14));
}

TEST_CASE("numbers are written with 17 significant digits", "[io]") {
  CHECK(io::number(0.1) == "0.10000000000000001");
  CHECK(io::number(1.0) == "1");
  CHECK(std::stod(io::number(oracle::inv_e)) == oracle::inv_e);
}
