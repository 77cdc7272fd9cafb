#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "blowup/errors.hpp"
#include "blowup/harmonics.hpp"

using namespace blowup;

namespace {

constexpr double kPi = std::numbers::pi;

// Fixed-seed generator so the randomized trials are reproducible.
struct SplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double sym() { return 2.0 * (static_cast<double>(next() >> 11) * 0x1.0p-53) - 1.0; }
};

TraceFreeSym random_trace_free(int n, SplitMix& rng) {
  SymMat raw(n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) raw.set(i, j, rng.sym());
  return trace_free_part(raw);
}

// Harmonic of degree 4 in x0, x1; orthogonal to every quadratic harmonic.
double quartic(std::span<const double> x) {
  const double a = x[0], b = x[1];
  return a * a * a * a - 6.0 * a * a * b * b + b * b * b * b;
}

}  // namespace

TEST_CASE("closed-form sphere constants") {
  CHECK(sphere_area(2) == doctest::Approx(2.0 * kPi).epsilon(1e-15));
  CHECK(sphere_area(3) == doctest::Approx(4.0 * kPi).epsilon(1e-15));
  CHECK(sphere_area(4) == doctest::Approx(2.0 * kPi * kPi).epsilon(1e-15));
  CHECK(ball_volume(2) == doctest::Approx(kPi).epsilon(1e-15));
  CHECK(ball_volume(3) == doctest::Approx(4.0 * kPi / 3.0).epsilon(1e-15));

  CHECK(gram_constant(2) == doctest::Approx(kPi / 8.0).epsilon(1e-15));
  CHECK(gram_constant(3) == doctest::Approx(2.0 * kPi / 15.0).epsilon(1e-15));
  CHECK(kappa(2) == doctest::Approx(4.0 / kPi).epsilon(1e-15));
  CHECK(kappa(3) == doctest::Approx(15.0 / (4.0 * kPi)).epsilon(1e-15));

  // kappa_n * c_n = 1/2 algebraically, in every dimension.
  for (int n = 2; n <= 6; ++n)
    CHECK(kappa(n) * gram_constant(n) == doctest::Approx(0.5).epsilon(1e-14));

  CHECK(second_moment_total(2) == doctest::Approx(kPi / 2.0).epsilon(1e-15));
  CHECK(second_moment_total(3) == doctest::Approx(4.0 * kPi / 5.0).epsilon(1e-15));
}

TEST_CASE("surface fourth moments") {
  // integral of x_i x_j x_k x_l = |S^{n-1}| (d_ij d_kl + d_ik d_jl + d_il d_jk) / (n(n+2))
  CHECK(fourth_moment(0, 0, 0, 0, 2) == doctest::Approx(3.0 * kPi / 4.0).epsilon(1e-15));
  CHECK(fourth_moment(0, 0, 1, 1, 2) == doctest::Approx(kPi / 4.0).epsilon(1e-15));
  CHECK(fourth_moment(0, 0, 0, 0, 3) == doctest::Approx(4.0 * kPi / 5.0).epsilon(1e-15));
  CHECK(fourth_moment(0, 0, 1, 1, 3) == doctest::Approx(4.0 * kPi / 15.0).epsilon(1e-15));
  CHECK(fourth_moment(0, 1, 0, 1, 3) == doctest::Approx(4.0 * kPi / 15.0).epsilon(1e-15));
  CHECK(fourth_moment(0, 0, 0, 1, 2) == 0.0);
  CHECK(fourth_moment(0, 1, 2, 2, 3) == 0.0);
}

TEST_CASE("quadratic profile values, gradient, hessian") {
  SymMat raw(2);
  raw.set(0, 0, 0.3);
  raw.set(0, 1, 0.2);
  raw.set(1, 1, -0.3);
  const QuadraticProfile q(trace_free_part(raw));
  const Vec x = {0.3, -0.7};

  const double r2 = 0.3 * 0.3 + 0.7 * 0.7;
  const double xbx = 0.3 * (0.3 * 0.3 + 0.2 * (-0.7)) + (-0.7) * (0.2 * 0.3 + (-0.3) * (-0.7));
  CHECK(q.isotropic_part(x) == doctest::Approx(r2 / 4.0).epsilon(1e-15));
  CHECK(q.harmonic_part(x) == doctest::Approx(xbx / 2.0).epsilon(1e-15));
  CHECK(q.value(x) == doctest::Approx(r2 / 4.0 + xbx / 2.0).epsilon(1e-15));

  // gradient = (I/n + B) x, checked against central differences
  const Vec g = q.gradient(x);
  const double h = 1e-6;
  for (int k = 0; k < 2; ++k) {
    Vec lo = x, hi = x;
    lo[k] -= h;
    hi[k] += h;
    CHECK(g[k] == doctest::Approx((q.value(hi) - q.value(lo)) / (2.0 * h)).epsilon(1e-8));
  }

  // laplace(q) = 1, so the hessian trace is 1
  CHECK(q.hessian().trace() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(q.hessian()(0, 1) == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("gram pairs match quadrature integrals") {
  SplitMix rng{17};
  for (int n : {2, 3}) {
    const SphereQuadrature quad = SphereQuadrature::standard(n);
    for (int trial = 0; trial < 4; ++trial) {
      const TraceFreeSym b = random_trace_free(n, rng);
      const TraceFreeSym c = random_trace_free(n, rng);
      const double via_quad = quad.integrate([&](std::span<const double> x) {
        return 0.25 * b.quad_form(x) * c.quad_form(x);
      });
      CHECK(gram_pair(b, c) == doctest::Approx(via_quad).epsilon(1e-12));
      CHECK(gram_pair(b, c) ==
            doctest::Approx(gram_constant(n) * b.frob_dot(c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("quadrature rules integrate polynomials exactly") {
  const SphereQuadrature circle = SphereQuadrature::circle(64);
  double total = 0.0;
  for (std::size_t i = 0; i < circle.size(); ++i) total += circle.weight(i);
  CHECK(total == doctest::Approx(2.0 * kPi).epsilon(1e-14));
  const double cos2 = circle.integrate([](std::span<const double> x) { return x[0] * x[0]; });
  CHECK(cos2 == doctest::Approx(kPi).epsilon(1e-14));
  const double cos4 =
      circle.integrate([](std::span<const double> x) { return x[0] * x[0] * x[0] * x[0]; });
  CHECK(cos4 == doctest::Approx(3.0 * kPi / 4.0).epsilon(1e-14));

  const SphereQuadrature sphere = SphereQuadrature::sphere_product(16, 32);
  total = 0.0;
  for (std::size_t i = 0; i < sphere.size(); ++i) total += sphere.weight(i);
  CHECK(total == doctest::Approx(4.0 * kPi).epsilon(1e-13));
  CHECK(sphere.integrate([](std::span<const double> x) { return x[0] * x[0]; }) ==
        doctest::Approx(4.0 * kPi / 3.0).epsilon(1e-13));
  CHECK(sphere.integrate([](std::span<const double> x) { return x[2] * x[2] * x[2] * x[2]; }) ==
        doctest::Approx(fourth_moment(2, 2, 2, 2, 3)).epsilon(1e-13));
  CHECK(sphere.integrate([](std::span<const double> x) { return x[0] * x[0] * x[1] * x[1]; }) ==
        doctest::Approx(fourth_moment(0, 0, 1, 1, 3)).epsilon(1e-13));
}

TEST_CASE("quasi-random rule carries statistical accuracy only") {
  const SphereQuadrature quad = SphereQuadrature::quasi_random(4, 4096);
  CHECK(quad.order() == 0);
  double total = 0.0;
  for (std::size_t i = 0; i < quad.size(); ++i) total += quad.weight(i);
  CHECK(total == doctest::Approx(sphere_area(4)).epsilon(1e-12));
  const double x2 = quad.integrate([](std::span<const double> x) { return x[0] * x[0]; });
  CHECK(x2 == doctest::Approx(sphere_area(4) / 4.0).epsilon(0.02));
}

TEST_CASE("harmonic basis is frobenius-orthonormal and spans") {
  SplitMix rng{23};
  for (int n : {2, 3, 4}) {
    const HarmonicBasis basis(n);
    CHECK(basis.size() == n * (n + 1) / 2 - 1);
    for (int i = 0; i < basis.size(); ++i)
      for (int j = 0; j < basis.size(); ++j)
        CHECK(basis.element(i).frob_dot(basis.element(j)) ==
              doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-13));

    const TraceFreeSym b = random_trace_free(n, rng);
    const TraceFreeSym back = basis.combine(basis.coordinates(b));
    CHECK((back - b).frob_norm() <= 1e-13);
  }
}

TEST_CASE("projection recovers the quadratic coefficient under contamination") {
  SplitMix rng{41};
  for (int n : {2, 3}) {
    const HarmonicBasis basis(n);
    const SphereQuadrature quad = SphereQuadrature::standard(n);
    for (int trial = 0; trial < 5; ++trial) {
      const TraceFreeSym b = random_trace_free(n, rng);
      const QuadraticProfile profile(b);
      Vec tilt(static_cast<std::size_t>(n));
      for (double& v : tilt) v = rng.sym();
      const double offset = rng.sym();
      const double mix = rng.sym();

      std::vector<double> samples(quad.size());
      for (std::size_t i = 0; i < quad.size(); ++i) {
        const auto x = quad.node(i);
        samples[i] = profile.value(x) + offset + dot(tilt, x) + mix * quartic(x);
      }
      const Projection proj = project_samples(samples, basis, quad);
      CHECK((proj.coeff - b).frob_norm() <= 1e-11);

      // moments are the gram constant times the coordinates
      const auto coords = basis.coordinates(proj.coeff);
      for (int j = 0; j < basis.size(); ++j)
        CHECK(proj.moments[static_cast<std::size_t>(j)] ==
              doctest::Approx(gram_constant(n) * coords[static_cast<std::size_t>(j)])
                  .epsilon(1e-10));
    }
  }
}

TEST_CASE("gauss-legendre nodes integrate high-degree monomials") {
  std::vector<double> nodes, weights;
  gauss_legendre(6, nodes, weights);
  REQUIRE(nodes.size() == 6);
  double total = 0.0, x10 = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    total += weights[i];
    x10 += weights[i] * std::pow(nodes[i], 10);
  }
  CHECK(total == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(x10 == doctest::Approx(2.0 / 11.0).epsilon(1e-13));
}

TEST_CASE("dimension guards") {
  CHECK_THROWS_AS(sphere_area(1), InvalidArgument);
  CHECK_THROWS_AS(HarmonicBasis(1), InvalidArgument);
  CHECK_THROWS_AS(SphereQuadrature::standard(1), InvalidArgument);
}
