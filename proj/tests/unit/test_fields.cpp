#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/fields.hpp"

using namespace blowup;

namespace {

// Central-difference Laplacian; h = 1e-4 keeps the O(h^2) truncation near 1e-8
// for the C^infinity pieces probed here.
double fd_laplacian(const SolutionField& f, Vec x, double h = 1e-4) {
  double acc = 0.0;
  const double mid = f.value(x);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double keep = x[k];
    x[k] = keep + h;
    const double hi = f.value(x);
    x[k] = keep - h;
    const double lo = f.value(x);
    x[k] = keep;
    acc += (hi - 2.0 * mid + lo) / (h * h);
  }
  return acc;
}

PatchConfig two_balls() {
  PatchConfig pc;
  pc.dimension = 2;
  pc.patches = {{{0.30, 0.10}, 0.08}, {{-0.25, -0.20}, 0.10}};
  SymMat seed(2);
  seed.set(0, 0, 0.12);
  seed.set(0, 1, -0.04);
  seed.set(1, 1, -0.12);
  pc.seed = trace_free_part(seed);
  return pc;
}

}  // namespace

TEST_CASE("ball potential: interior normalization and C^1 matching") {
  const Vec center = {0.20, -0.10};
  const double rho = 0.30;

  // interior: w = |x - c|^2 / (2n) exactly
  const Vec inside = {0.30, 0.00};
  const auto wi = ball_potential(center, rho, inside);
  const double d2 = 0.10 * 0.10 + 0.10 * 0.10;
  CHECK(wi.value == doctest::Approx(d2 / 4.0).epsilon(1e-15));
  CHECK(wi.gradient[0] == doctest::Approx(0.10 / 2.0).epsilon(1e-15));
  CHECK(wi.gradient[1] == doctest::Approx(0.10 / 2.0).epsilon(1e-15));

  // value and gradient are continuous across the ball boundary
  for (int n : {2, 3}) {
    const Vec c(static_cast<std::size_t>(n), 0.1);
    Vec dir(static_cast<std::size_t>(n), 0.0);
    dir[0] = 0.6;
    dir[static_cast<std::size_t>(n) - 1] = 0.8;
    const double eps = 1e-7;
    Vec just_in(c), just_out(c);
    for (int k = 0; k < n; ++k) {
      just_in[static_cast<std::size_t>(k)] += (rho - eps) * dir[static_cast<std::size_t>(k)];
      just_out[static_cast<std::size_t>(k)] += (rho + eps) * dir[static_cast<std::size_t>(k)];
    }
    const auto a = ball_potential(c, rho, just_in);
    const auto b = ball_potential(c, rho, just_out);
    CHECK(std::abs(a.value - b.value) <= 1e-7);
    for (int k = 0; k < n; ++k)
      CHECK(std::abs(a.gradient[static_cast<std::size_t>(k)] -
                     b.gradient[static_cast<std::size_t>(k)]) <= 1e-6);
  }
}

TEST_CASE("ball potential: laplacian is the ball indicator") {
  for (int n : {2, 3}) {
    const Vec c(static_cast<std::size_t>(n), 0.15);
    const double rho = 0.25;
    struct Probe final : SolutionField {
      Vec c;
      double rho;
      int n;
      int dimension() const override { return n; }
      FieldMode mode() const override { return FieldMode::consistency; }
      double value(std::span<const double> x) const override {
        return ball_potential(c, rho, x).value;
      }
      Vec gradient(std::span<const double> x) const override {
        return ball_potential(c, rho, x).gradient;
      }
      bool inactive(std::span<const double>) const override { return false; }
    } probe;
    probe.c = c;
    probe.rho = rho;
    probe.n = n;

    Vec at_center(c);
    CHECK(fd_laplacian(probe, at_center) == doctest::Approx(1.0).epsilon(1e-7));
    Vec outside(static_cast<std::size_t>(n), 0.0);
    outside[0] = 0.9;
    CHECK(std::abs(fd_laplacian(probe, outside)) <= 1e-6);

    // analytic gradient matches finite differences of the value
    Vec probe_pt(static_cast<std::size_t>(n), -0.2);
    probe_pt[0] = 0.55;
    const auto pv = ball_potential(c, rho, probe_pt);
    const double h = 1e-6;
    for (int k = 0; k < n; ++k) {
      Vec hi(probe_pt), lo(probe_pt);
      hi[static_cast<std::size_t>(k)] += h;
      lo[static_cast<std::size_t>(k)] -= h;
      const double fd = (ball_potential(c, rho, hi).value - ball_potential(c, rho, lo).value) /
                        (2.0 * h);
      CHECK(pv.gradient[static_cast<std::size_t>(k)] == doctest::Approx(fd).epsilon(1e-8));
    }
  }
}

TEST_CASE("synthetic solution: normalization, PDE, and mask") {
  const auto field = build_synthetic(two_balls());

  const Vec origin = {0.0, 0.0};
  CHECK(std::abs(field->value(origin)) <= 1e-15);
  CHECK(std::abs(field->gradient(origin)[0]) <= 1e-15);
  CHECK(std::abs(field->gradient(origin)[1]) <= 1e-15);

  // laplace(u) = 1 off the patches, 0 on them
  CHECK(fd_laplacian(*field, {0.60, 0.20}) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(fd_laplacian(*field, {-0.10, 0.55}) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(std::abs(fd_laplacian(*field, {0.30, 0.10})) <= 1e-7);
  CHECK(std::abs(fd_laplacian(*field, {-0.25, -0.20})) <= 1e-7);

  CHECK(field->inactive(Vec{0.30, 0.10}));
  CHECK(field->inactive(Vec{0.35, 0.14}));
  CHECK_FALSE(field->inactive(Vec{0.60, 0.20}));
  CHECK_FALSE(field->inactive(Vec{0.0, 0.0}));

  // gradient matches finite differences away from patch boundaries
  const Vec pts[] = {{0.50, -0.30}, {-0.60, 0.10}, {0.05, 0.40}};
  for (const Vec& p : pts) {
    const Vec g = field->gradient(p);
    const double h = 1e-6;
    for (std::size_t k = 0; k < 2; ++k) {
      Vec hi(p), lo(p);
      hi[k] += h;
      lo[k] -= h;
      CHECK(g[k] ==
            doctest::Approx((field->value(hi) - field->value(lo)) / (2.0 * h)).epsilon(1e-7));
    }
  }

  const auto geom = field->ball_geometry();
  REQUIRE(geom.has_value());
  REQUIRE(geom->balls.size() == 2);
  CHECK(geom->balls[0].center[0] == doctest::Approx(0.30));
  CHECK(geom->balls[1].radius == doctest::Approx(0.10));
}

TEST_CASE("rescaling composes and dilates the mask") {
  const auto base = build_synthetic(two_balls());
  const double s = 0.35, t = 0.20;
  const auto once = rescale(base, s + t);
  const auto twice = rescale(rescale(base, s), t);

  const Vec pts[] = {{0.40, -0.10}, {-0.20, 0.30}, {0.70, 0.60}};
  for (const Vec& p : pts) {
    CHECK(once->value(p) == doctest::Approx(twice->value(p)).epsilon(1e-13));
    CHECK(once->value(p) ==
          doctest::Approx(std::exp(2.0 * (s + t)) *
                          (base->value(Vec{p[0] * std::exp(-(s + t)), p[1] * std::exp(-(s + t))}) -
                           base->value(Vec{0.0, 0.0})))
              .epsilon(1e-12));
    const Vec g_once = once->gradient(p);
    const Vec g_twice = twice->gradient(p);
    CHECK(g_once[0] == doctest::Approx(g_twice[0]).epsilon(1e-12));
    CHECK(g_once[1] == doctest::Approx(g_twice[1]).epsilon(1e-12));
  }

  // the inactive ball at (0.30, 0.10) dilates by e^t
  const double lift = std::exp(s + t);
  CHECK(once->inactive(Vec{0.30 * lift, 0.10 * lift}));
  CHECK_FALSE(once->inactive(Vec{0.30, 0.10}));
  const auto geom = once->ball_geometry();
  REQUIRE(geom.has_value());
  CHECK(geom->balls[0].center[0] == doctest::Approx(0.30 * lift).epsilon(1e-14));
  CHECK(geom->balls[0].radius == doctest::Approx(0.08 * lift).epsilon(1e-14));
}

namespace {

std::string config_error_of(const PatchConfig& pc) {
  try {
    pc.validate();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("patch validation names the offending patch") {
  PatchConfig pc = two_balls();

  pc.patches[1].radius = -0.1;
  CHECK(config_error_of(pc).find("patch 1") != std::string::npos);

  pc = two_balls();
  pc.patches[0].center = {0.0, 0.0};  // would contain the origin
  CHECK_THROWS_AS(pc.validate(), ConfigError);

  pc = two_balls();
  pc.patches[0].center = {0.95, 0.0};  // pokes through the unit sphere
  CHECK_THROWS_AS(pc.validate(), ConfigError);

  pc = two_balls();
  pc.patches[1] = pc.patches[0];  // overlapping pair, named by index
  CHECK(config_error_of(pc).find("patches 0 and 1") != std::string::npos);

  pc = two_balls();
  pc.patches[0].center = {0.3};  // dimension mismatch
  CHECK_THROWS_AS(pc.validate(), ConfigError);
}
