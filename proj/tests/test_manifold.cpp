#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include "hjreduce/io.hpp"
#include "hjreduce/manifold.hpp"
#include "oracles.hpp"

using namespace hjreduce;
using namespace hjreduce::manifold;
using Catch::Approx;

namespace {

InitialVelocity constant_velocity(double c) {
  return [c](ConstSpan, MutSpan v) { std::fill(v.begin(), v.end(), c); };
}

InitialVelocity linear_velocity(double a) {
  return [a](ConstSpan x, MutSpan v) {
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = a * x[i];
  };
}

VelocityProvider harmonic_G() {
  return [](ConstSpan x, double t, MutSpan v) { v[0] = -x[0] * std::tan(t); };
}

VelocityProvider riccati_G() {
  return [](ConstSpan x, double t, MutSpan v) { v[0] = 2.0 * oracle::riccati(t, 1.0, 1.0) * x[0]; };
}

}  // namespace

TEST_CASE("constant field advects to itself", "[manifold]") {
  const auto sc = make_scenario("free");
  const Grid g = Grid::line(-1.0, 1.0, 41);
  const auto G = build_G(sc.model, constant_velocity(1.0), g, 1.0, 1e-2);
  for (double v : G.values) CHECK(v == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("harmonic field from rest is -x tan t", "[manifold]") {
  const auto sc = make_scenario("harmonic");
  const Grid g = Grid::line(-1.0, 1.0, 41);
  const auto G = build_G(sc.model, constant_velocity(0.0), g, 1.0, 1e-3);
  for (std::size_t n = 0; n < g.size(); ++n)
    CHECK(std::abs(G.values[n] + g.coordinate(n, 0) * std::tan(1.0)) <= 1e-8);
  CHECK(G.values[30] == Approx(oracle::minus_half_tan1).epsilon(1e-8));  // x = 0.5
}

TEST_CASE("caustic raises FOLD with a record", "[manifold]") {
  const auto sc = make_scenario("harmonic");
  const Grid g = Grid::line(-1.0, 1.0, 41);
  try {
    build_G(sc.model, constant_velocity(0.0), g, std::numbers::pi / 2, 1e-3);
    FAIL("expected FOLD");
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrorKind::fold);
    REQUIRE(e.record());
    CHECK(std::abs(e.record()->time - std::numbers::pi / 2) <= 0.02);
    CHECK(e.record()->determinant < 1e-6);
  }
}

TEST_CASE("caustic detection window", "[manifold][property]") {
  const auto sc = make_scenario("harmonic");
  const Grid g = Grid::line(-1.0, 1.0, 21);
  for (double t : {0.5, 1.0, 1.2}) CHECK_NOTHROW(build_G(sc.model, constant_velocity(0.0), g, t, 1e-3));
  for (double t : {std::numbers::pi / 2, std::numbers::pi / 2 + 0.01, 2.0}) {
    try {
      build_G(sc.model, constant_velocity(0.0), g, t, 1e-3);
      FAIL("expected FOLD at t=" << t);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::fold);
      CHECK(e.record()->time <= std::numbers::pi / 2 + 0.02);
    }
  }
}

TEST_CASE("two-dimensional inverse flow", "[manifold]") {
  SECTION("harmonic") {
    const auto sc = make_scenario("harmonic", {.dim = 2});
    const Grid g = Grid::square(-1.0, 1.0, 9);
    const auto G = build_G(sc.model, constant_velocity(0.0), g, 0.8, 1e-3);
    for (std::size_t n = 0; n < g.size(); ++n)
      for (std::size_t d = 0; d < 2; ++d)
        CHECK(std::abs(G.values[n * 2 + d] + g.coordinate(n, d) * std::tan(0.8)) <= 1e-8);
  }
  SECTION("curl force against the series propagator") {
    const auto sc = make_scenario("curl2d");
    const Grid g = Grid::square(-1.0, 1.0, 9);
    const auto G = build_G(sc.model, linear_velocity(0.5), g, 0.5, 1e-3);
    for (std::size_t n = 0; n < g.size(); ++n) {
      const auto ref = oracle::curl_G(0.5, 0.5, g.coordinate(n, 0), g.coordinate(n, 1));
      CHECK(std::abs(G.values[n * 2] - ref[0]) <= 1e-8);
      CHECK(std::abs(G.values[n * 2 + 1] - ref[1]) <= 1e-8);
    }
  }
}

TEST_CASE("seed box expands until the grid is covered", "[manifold]") {
  const auto sc = make_scenario("free");
  const Grid g = Grid::line(-1.0, 1.0, 21);
  // contracting flow x = x0 (1 - t): the inflated seed box alone is too small
  BuildOptions strict;
  strict.max_expansions = 0;
  try {
    build_G_series(sc.model, linear_velocity(-1.0), g, {0.5}, 1e-2, strict);
    FAIL("expected COVERAGE");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::coverage);
    REQUIRE(e.record());
    CHECK(e.record()->time == 0.5);
  }
  const auto G = build_G(sc.model, linear_velocity(-1.0), g, 0.5, 1e-2);
  for (std::size_t n = 0; n < g.size(); ++n) CHECK(G.values[n] == Approx(-2.0 * g.coordinate(n, 0)).margin(1e-12));

  const Grid g2 = Grid::square(-1.0, 1.0, 5);
  auto model2 = make_scenario("free", {.dim = 2}).model;
  try {
    build_G_series(model2, linear_velocity(-1.0), g2, {0.5}, 1e-2, strict);
    FAIL("expected COVERAGE");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::coverage);
  }
}

TEST_CASE("bundle members are Newton trajectories", "[manifold][property]") {
  const auto sc = make_scenario("damped_harmonic");
  BuildOptions opt;
  opt.keep_trajectories = true;
  const Box box{{-1.0}, {1.0}};
  const auto g0 = [](ConstSpan x, MutSpan v) { v[0] = std::sin(x[0]); };
  const auto b = integrate_bundle(sc.model, g0, box, {11}, {1.3}, 1e-3, opt);
  for (std::size_t s = 0; s < b.size(); ++s) {
    const Vec v0{std::sin(b.seeds[s][0])};
    const auto ref = newton::integrate(sc.model, b.seeds[s], v0, 1.3, 1e-3);
    REQUIRE(ref.size() == b.trajectories[s].size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      CHECK(std::abs(ref.positions[k][0] - b.trajectories[s].positions[k][0]) <= 1e-10);
      CHECK(std::abs(ref.velocities[k][0] - b.trajectories[s].velocities[k][0]) <= 1e-10);
    }
  }
}

TEST_CASE("build_G is independent of the worker count", "[manifold][property]") {
  const auto sc = make_scenario("curl2d");
  const Grid g = Grid::square(-1.0, 1.0, 7);
  setenv("HJREDUCE_THREADS", "1", 1);
  const auto a = build_G(sc.model, linear_velocity(0.5), g, 0.4, 1e-3);
  setenv("HJREDUCE_THREADS", "4", 1);
  const auto b = build_G(sc.model, linear_velocity(0.5), g, 0.4, 1e-3);
  unsetenv("HJREDUCE_THREADS");
  CHECK(a.values == b.values);
}

TEST_CASE("slaving residual", "[manifold]") {
  SECTION("free constant field") {
    const auto sc = make_scenario("free");
    const Grid g = Grid::line(-1.0, 1.0, 11);
    VectorField G(g, 1, Vec(g.size(), 1.0), 0.0);
    const auto r = residual_G(sc.model, G, G, G, 0.1);
    for (double v : r.values) CHECK(v == 0.0);
  }
  SECTION("wrong field by hand") {
    const auto sc = make_scenario("harmonic");
    const Grid g = Grid::line(-1.0, 1.0, 11);
    VectorField G(g, 1, 0.0);
    for (std::size_t n = 0; n < g.size(); ++n) G.values[n] = g.coordinate(n, 0);
    const auto r = residual_G(sc.model, G, G, G, 0.1);
    CHECK(r.values[10] == Approx(2.0).epsilon(1e-12));
  }
  SECTION("second-order decay on the harmonic closed form") {
    const auto sc = make_scenario("harmonic");
    auto exact_residual = [&](std::size_t points, double dt) {
      const Grid g = Grid::line(-1.0, 1.0, points);
      auto slice = [&](double t) {
        VectorField G(g, 1, t);
        for (std::size_t n = 0; n < g.size(); ++n) G.values[n] = -g.coordinate(n, 0) * std::tan(t);
        return G;
      };
      const auto r = residual_G(sc.model, slice(0.5 - dt), slice(0.5), slice(0.5 + dt), dt);
      double m = 0.0;
      for (double v : r.values) m = std::max(m, v);
      return m;
    };
    const double r1 = exact_residual(21, 0.1), r2 = exact_residual(41, 0.05);
    CHECK(r1 > 0.0);
    CHECK(r1 / r2 == Approx(4.0).epsilon(0.15));
  }
  SECTION("grid mismatch") {
    const auto sc = make_scenario("free");
    VectorField a(Grid::line(-1, 1, 11), 1, 0.0), b(Grid::line(-1, 1, 12), 1, 0.0);
    CHECK_THROWS_AS(residual_G(sc.model, a, a, b, 0.1), Error);
  }
}

TEST_CASE("reduced trajectories", "[manifold]") {
  {
    const auto tr = integrate_reduced([](ConstSpan, double, MutSpan v) { v[0] = 1.0; }, Vec{0.0}, 1.0, 1e-3);
    CHECK(tr.positions.back()[0] == Approx(1.0).epsilon(1e-13));
  }
  {
    const auto tr = integrate_reduced(riccati_G(), Vec{1.0}, 1.0, 1e-3);
    CHECK(tr.positions.back()[0] == Approx(oracle::two_minus_inv_e).epsilon(1e-10));
    CHECK(tr.velocities.front()[0] == Approx(1.0));
  }
  {
    const auto tr = integrate_reduced(harmonic_G(), Vec{0.5}, 1.0, 1e-3);
    CHECK(tr.positions.back()[0] == Approx(oracle::half_cos1).epsilon(1e-10));
  }
  {
    const Box box{{-1.0}, {1.0}};
    try {
      integrate_reduced([](ConstSpan, double, MutSpan v) { v[0] = 1.0; }, Vec{0.5}, 1.0, 1e-2, 0.0, box);
      FAIL("expected domain exit");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::domain_exit);
      CHECK(e.record()->time == Approx(0.5).margin(0.011));
    }
  }
}

TEST_CASE("slaving error with closed-form fields", "[manifold]") {
  CHECK(slaving_error(make_scenario("free").model, [](ConstSpan, double, MutSpan v) { v[0] = 1.0; }, Vec{0.3}, 1.0,
                      1e-3) <= 1e-14);
  CHECK(slaving_error(make_scenario("damped_free").model, riccati_G(), Vec{1.0}, 1.0, 1e-3) <= 1e-7);
  CHECK(slaving_error(make_scenario("harmonic").model, harmonic_G(), Vec{0.7}, 1.0, 1e-3) <= 1e-7);
}

TEST_CASE("slaving error converges at fourth order with closed-form G", "[manifold][property]") {
  const auto model = make_scenario("harmonic").model;
  const double e1 = slaving_error(model, harmonic_G(), Vec{0.7}, 1.0, 0.1);
  const double e2 = slaving_error(model, harmonic_G(), Vec{0.7}, 1.0, 0.05);
  CHECK(e1 / e2 == Approx(16.0).epsilon(0.3));
}

TEST_CASE("grid-interpolated G is slaved up to interpolation error", "[manifold]") {
  const auto sc = make_scenario("harmonic");
  const Grid g = Grid::line(-2.0, 2.0, 401);
  Vec times;
  for (int k = 0; k <= 20; ++k) times.push_back(0.05 * k);
  times.front() = 1e-9;
  BuildOptions opt;
  auto series = build_G_series(sc.model, constant_velocity(0.0), g, Vec(times.begin() + 1, times.end()), 1e-3, opt);
  series.insert(series.begin(), VectorField(g, 1, Vec(g.size(), 0.0), 0.0));
  const FieldSeriesProvider provider(series);
  const double err = slaving_error(sc.model, std::cref(provider), Vec{0.8}, 1.0, 1e-3);
  CHECK(err <= 5e-3);
}

TEST_CASE("field series provider reports domain exits", "[manifold]") {
  const Grid g = Grid::line(-1.0, 1.0, 5);
  FieldSeriesProvider p({VectorField(g, 1, Vec(5, 1.0), 0.0), VectorField(g, 1, Vec(5, 3.0), 1.0)});
  Vec out(1);
  p(Vec{0.2}, 0.5, out);
  CHECK(out[0] == Approx(2.0));
  CHECK_THROWS_AS(p(Vec{2.0}, 0.5, out), Error);
  CHECK_THROWS_AS(p(Vec{0.0}, 1.5, out), Error);
}

TEST_CASE("vector field CSV layout", "[manifold][io]") {
  const Grid g = Grid::square(0.0, 2.0, 3);
  VectorField f(g, 2, 0.0);
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = static_cast<double>(i);
  std::ostringstream os;
  io::write_field_csv(os, f);
  CHECK(os.str().rfind("x_1,x_2,G_1,G_2\n0,0,0,1\n0,1,2,3\n0,2,4,5\n1,0,6,7\n", 0) == 0);
}
