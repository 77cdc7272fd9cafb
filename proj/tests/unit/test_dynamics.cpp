#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <numbers>
#include <vector>

#include "blowup/config.hpp"
#include "blowup/dynamics.hpp"
#include "blowup/errors.hpp"
#include "blowup/fields.hpp"
#include "blowup/harmonics.hpp"
#include "blowup/solver.hpp"

using namespace blowup;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kLn2 = std::numbers::ln2;

PatchConfig single_ball(double cx, double cy, double rho) {
  PatchConfig pc;
  pc.dimension = 2;
  pc.patches = {{{cx, cy}, rho}};
  SymMat seed(2);
  seed.set(0, 0, 0.05);
  seed.set(1, 1, -0.05);
  pc.seed = trace_free_part(seed);
  return pc;
}

// |x|^2-weighted mass of B(c, rho) in the plane: pi rho^2 (|c|^2 + rho^2/2).
double ball_mass2(double c, double rho) { return kPi * rho * rho * (c * c + rho * rho / 2.0); }

}  // namespace

TEST_CASE("closed-form ball moments") {
  const auto field = build_synthetic(single_ball(0.5, 0.0, 0.1));
  const IntegrationSpec spec;
  const MomentData data = compute_moments(*field, 0.0, spec, 4);

  // the ball reaches across the annulus edge at 0.5, so the dyadic split is
  // sampled; the totals are still handled in closed form and stay exact
  CHECK_FALSE(data.closed_form);
  CHECK(data.totals_closed);
  CHECK(data.fallback);
  CHECK(data.stat_error > 0.0);
  CHECK(data.mass2 == doctest::Approx(kPi * 0.00255).epsilon(1e-14));
  CHECK(data.second_moment(0, 0) == doctest::Approx(kPi * 0.002525).epsilon(1e-14));
  CHECK(data.second_moment(1, 1) == doctest::Approx(kPi * 0.000025).epsilon(1e-14));
  CHECK(data.second_moment(0, 1) == doctest::Approx(0.0).epsilon(1e-16));
  CHECK(data.second_moment.trace() == doctest::Approx(data.mass2).epsilon(1e-14));

  // kappa_2 tf(M) = diag(0.005, -0.005): the pi's cancel exactly
  const TraceFreeSym rhs = ode_rhs(data.second_moment);
  CHECK(rhs(0, 0) == doctest::Approx(0.005).epsilon(1e-13));
  CHECK(rhs(1, 1) == doctest::Approx(-0.005).epsilon(1e-13));

  // dilation: at t = ln 1.5 the ball sits at 0.75 with radius 0.15, inside
  // annulus 0, and the whole evaluation is closed form
  const MomentData dilated = compute_moments(*field, std::log(1.5), spec, 0);
  CHECK(dilated.closed_form);
  CHECK_FALSE(dilated.fallback);
  CHECK(dilated.stat_error == 0.0);
  CHECK(dilated.mass2 == doctest::Approx(ball_mass2(0.75, 0.15)).epsilon(1e-13));
}

TEST_CASE("a ball strictly inside one annulus fills exactly that slot") {
  const auto field = build_synthetic(single_ball(0.045, 0.0, 0.01));
  const IntegrationSpec spec;
  const MomentData data = compute_moments(*field, 0.0, spec, 8);

  // [0.035, 0.055] sits strictly inside (2^-5, 2^-4]
  REQUIRE(data.annulus_mass.size() == 9);
  for (std::size_t k = 0; k < data.annulus_mass.size(); ++k) {
    if (k == 4)
      CHECK(data.annulus_mass[k] == doctest::Approx(data.mass2).epsilon(1e-14));
    else
      CHECK(data.annulus_mass[k] == 0.0);
    CHECK(data.annulus_sampled[k] == 0);
    CHECK(data.annulus_sigma[k] == 0.0);
  }
  CHECK(data.annulus_tail == 0.0);
  CHECK(data.mass2 == doctest::Approx(ball_mass2(0.045, 0.01)).epsilon(1e-14));
}

TEST_CASE("sampled route agrees with the closed form within 3 sigma") {
  const auto field = build_synthetic(single_ball(0.5, 0.0, 0.1));
  IntegrationSpec spec;
  spec.kind = IntegrationSpec::Kind::sampled;
  spec.samples = 200000;
  spec.seed = 7;
  const MomentData data = compute_moments(*field, 0.0, spec, 2);

  CHECK_FALSE(data.closed_form);
  CHECK_FALSE(data.totals_closed);
  CHECK(data.stat_error > 0.0);
  CHECK(std::abs(data.mass2 - kPi * 0.00255) <= 3.0 * data.stat_error);

  // the same seed reproduces the estimate bit for bit
  const MomentData again = compute_moments(*field, 0.0, spec, 2);
  CHECK(again.mass2 == data.mass2);
  CHECK(again.second_moment(0, 0) == data.second_moment(0, 0));

  // partition: annulus masses and tail sum to the total
  double sum = data.annulus_tail;
  for (double m : data.annulus_mass) sum += m;
  CHECK(std::abs(sum - data.mass2) <= 3.0 * data.stat_error + 1e-12);
}

TEST_CASE("straddling balls fall back to sampling, flagged") {
  // radius reaches across the annulus edge at 2^-4 = 0.0625
  const auto field = build_synthetic(single_ball(0.060, 0.0, 0.01));
  const IntegrationSpec spec;  // closed-form requested
  const MomentData data = compute_moments(*field, 0.0, spec, 8);

  CHECK_FALSE(data.closed_form);
  CHECK(data.fallback);
  CHECK(data.stat_error > 0.0);
  // only the two annuli the ball touches carry a sampled route tag
  CHECK(data.annulus_sampled[3] != 0);
  CHECK(data.annulus_sampled[4] != 0);
  CHECK(data.annulus_sampled[0] == 0);
  double sum = data.annulus_tail;
  for (double m : data.annulus_mass) sum += m;
  CHECK(std::abs(sum - data.mass2) <= 3.0 * data.stat_error + 1e-12);
  // the total is still exact: the ball itself is handled in closed form
  CHECK(data.mass2 == doctest::Approx(ball_mass2(0.060, 0.01)).epsilon(1e-13));
}

TEST_CASE("series sweep keeps the structural moment identities") {
  PatchConfig pc;
  pc.dimension = 2;
  pc.patches = {{{0.10, 0.03}, 0.020}, {{-0.07, 0.06}, 0.025}, {{0.01, -0.10}, 0.015}};
  pc.seed = TraceFreeSym(2);
  const auto field = build_synthetic(pc);

  SeriesOptions opt;
  opt.k_max = 4;
  std::vector<double> grid;
  for (int i = 0; i <= 4; ++i) grid.push_back(i * kLn2 / 8.0);
  const ScaleSeries series = build_series(*field, grid, opt);

  REQUIRE(series.records.size() == 5);
  CHECK(series.mode == FieldMode::consistency);
  const HarmonicBasis basis(2);
  for (const auto& rec : series.records) {
    const auto [lo, hi] = rec.moments.second_moment.eigen_range();
    CHECK(lo >= -1e-12);
    CHECK(hi >= lo);
    CHECK(std::abs(rec.moments.second_moment.trace() - rec.moments.mass2) <= 1e-12);

    // at fractional scales some ball reaches across an annulus edge, so the
    // partition residual carries the sampling error of that split
    double sum = rec.moments.annulus_tail;
    for (double m : rec.moments.annulus_mass) sum += m;
    CHECK(std::abs(sum - rec.moments.mass2) <= 3.0 * rec.moments.stat_error + 1e-12);

    // projection coordinates and quadrature moments differ by the gram constant
    const auto coords = basis.coordinates(rec.coeff);
    for (int j = 0; j < basis.size(); ++j)
      CHECK(rec.sphere_moments[static_cast<std::size_t>(j)] ==
            doctest::Approx(gram_constant(2) * coords[static_cast<std::size_t>(j)])
                .epsilon(1e-12));

    CHECK(rec.eps >= 0.0);
    CHECK(std::isfinite(rec.eps));
    // consistency mode never fills the dissipation identity columns
    CHECK(std::isnan(rec.lyap_residual));
  }
  CHECK_THROWS_AS(lyapunov_residual(series), ModeError);
}

TEST_CASE("interval cross-check integrates the center ODE") {
  PatchConfig pc;
  pc.dimension = 2;
  pc.patches = {{{0.10, 0.03}, 0.020}, {{-0.07, 0.06}, 0.025}};
  pc.seed = TraceFreeSym(2);
  const auto field = build_synthetic(pc);

  SeriesOptions opt;
  opt.k_max = 0;
  std::vector<double> grid = {0.0, kLn2 / 8.0, kLn2 / 4.0};
  const ScaleSeries series = build_series(*field, grid, opt);
  const auto checks = ode_crosscheck(series, *field, opt);

  REQUIRE(checks.size() == 2);
  for (const auto& chk : checks) {
    CHECK(chk.closed_form);
    CHECK(chk.frob_residual <= 1e-7);
    for (double r : chk.moment_residual) CHECK(std::abs(r) <= 1e-7);
  }

  // fault injection: a flipped kappa leaves twice the drift as residual
  SeriesOptions wrong = opt;
  wrong.kappa_scale = -1.0;
  const auto broken = ode_crosscheck(series, *field, wrong);
  CHECK(broken[0].frob_residual > 1e-7);
  CHECK(broken[0].frob_residual > 50.0 * checks[0].frob_residual);
}

TEST_CASE("dyadic lookup is exact on closed-form scales") {
  const auto field = build_synthetic(single_ball(0.045, 0.0, 0.01));
  SeriesOptions opt;
  opt.k_max = 2;
  const auto grid = ScaleSpec{0.0, 4.0 * kLn2, 4}.grid();
  const ScaleSeries series = build_series(*field, grid, opt);

  const std::vector<std::size_t> indices = {0, 1, 2};
  const auto dyadic = dyadic_check(series, *field, opt, indices);
  REQUIRE(!dyadic.empty());

  bool saw_nonzero = false;
  for (const auto& rec : dyadic) {
    CHECK(rec.closed_both);
    CHECK(rec.residual <= 1e-12);
    if (rec.direct != 0.0) saw_nonzero = true;
    // J_k is within both of its bounds
    CHECK(std::abs(rec.j_term) <= rec.j_bound_spectral + 1e-12);
    CHECK(std::abs(rec.j_term) <= rec.j_bound_flow + 1e-12);
    // independent sampler sees the same mass
    const double allowed =
        3.0 * std::hypot(rec.sampled_err, series.records[rec.scale_index].moments.annulus_sigma[
                                              static_cast<std::size_t>(rec.k)]) +
        1e-12;
    CHECK(std::abs(rec.sampled - rec.direct) <= allowed);
  }
  CHECK(saw_nonzero);

  // scale index 2, depth 2: the ball lives in annulus 2 with radius 0.04
  for (const auto& rec : dyadic)
    if (rec.scale_index == 2 && rec.k == 2)
      CHECK(rec.direct == doctest::Approx(ball_mass2(0.18, 0.04)).epsilon(1e-13));
}

TEST_CASE("absorption window: geometric constants and the majorant bound") {
  const auto field = build_synthetic(single_ball(0.045, 0.0, 0.01));
  SeriesOptions opt;
  opt.k_max = 2;
  const auto grid = ScaleSpec{0.0, 13.0 * kLn2, 13}.grid();
  const ScaleSeries series = build_series(*field, grid, opt);

  const AbsorptionReport report = absorption_check(series, 0.0);
  CHECK(report.S1 == doctest::Approx(16.0 / 225.0).epsilon(1e-15));
  CHECK(report.S2 == doctest::Approx(272.0 / 3375.0).epsilon(1e-15));
  CHECK(report.Mn == doctest::Approx(kPi / 2.0).epsilon(1e-15));
  CHECK(report.k_max_used == 2);
  CHECK(report.volterra_checked);
  REQUIRE(!report.V.empty());
  for (double v : report.V) CHECK(v >= 0.0);
  CHECK(report.V_tail_bound >= 0.0);
  CHECK(report.volterra_margin ==
        doctest::Approx(report.volterra_rhs - report.volterra_lhs).epsilon(1e-13));
  CHECK(report.volterra_margin >= 0.0);

  // a window shorter than k_max halvings refuses the check instead of lying
  const auto short_grid = ScaleSpec{0.0, 2.0 * kLn2, 2}.grid();
  const ScaleSeries short_series = build_series(*field, short_grid, opt);
  CHECK_FALSE(absorption_check(short_series, 0.0).volterra_checked);

  CHECK_THROWS_AS(absorption_check(series, 100.0), InvalidArgument);
}

TEST_CASE("dissipation integrals: two samplers agree") {
  const auto field = build_synthetic(single_ball(0.5, 0.0, 0.1));
  const HarmonicBasis basis(2);
  const SphereQuadrature quad = SphereQuadrature::standard(2);
  const Projection proj = compute_B(*field, 0.0, basis, quad);
  const IntegrationSpec spec;
  const MomentData moments = compute_moments(*field, 0.0, spec, 1);

  const IntegralData data = compute_I(*field, 0.0, proj.coeff, moments, spec, 50000);
  CHECK(std::abs(data.I - data.I_indep) <=
        3.0 * std::hypot(data.I_err, data.I_indep_err) + 1e-12);
  CHECK(std::abs(data.I0 - data.I0_indep) <=
        3.0 * std::hypot(data.I0_err, data.I0_indep_err) + 1e-12);
  CHECK(data.sup_grad_R_seen >= 0.0);

  // same spec, same result: the sampler streams are keyed, not global
  const IntegralData again = compute_I(*field, 0.0, proj.coeff, moments, spec, 50000);
  CHECK(again.I == data.I);
  CHECK(again.I0 == data.I0);
  CHECK(again.I_indep == data.I_indep);
}

TEST_CASE("grid solution series: dissipation identities hold discretely") {
  SolverConfig config;
  config.cells = 48;
  auto shared = std::make_shared<GridSolution>(
      fixed_point_solve(config, radial_solution_boundary(2, 0.4)));
  REQUIRE(shared->converged);
  const auto field = field_of(shared);

  SeriesOptions opt;
  opt.k_max = 1;
  // three scales: the lyapunov derivative needs a one-sided 3-point stencil
  const std::vector<double> grid = {0.0, kLn2 / 8.0, kLn2 / 4.0};
  const ScaleSeries series = build_series(*field, grid, opt);
  REQUIRE(series.mode == FieldMode::solution);

  const auto& rec = series.records[0];
  // grad u vanishes on the mask, so I = -A : M = -F/n - B : M with B ~ 0
  CHECK(std::abs(rec.integrals.I - rec.integrals.I_alt) <= 5e-3);
  CHECK(std::abs(rec.integrals.I + rec.moments.mass2 / 2.0) <= 5e-3);

  // cube-route structural bound: |I0| <= 2 eps F0 exactly
  CHECK(std::abs(rec.integrals.I0) <= 2.0 * rec.eps * rec.moments.annulus_mass[0] + 1e-12);

  const auto residuals = lyapunov_residual(series);
  REQUIRE(residuals.size() == 2);
  CHECK(residuals[0] <= 0.05);
  CHECK(std::isfinite(rec.lyap_lhs));
  CHECK(std::isfinite(rec.lyap_rhs));

  const AbsorptionReport absorption = absorption_check(series, 0.0);
  CHECK(absorption.i0_checked);
  CHECK(absorption.i0_min_margin >= -1e-12);
  CHECK_FALSE(absorption.volterra_checked);  // window far too short
}

TEST_CASE("seed mixing separates streams") {
  CHECK(mix_seed(1, 2, 3, 4) == mix_seed(1, 2, 3, 4));
  CHECK(mix_seed(1, 2, 3, 4) != mix_seed(4, 3, 2, 1));
  CHECK(mix_seed(1, 2) != mix_seed(1, 3));
  CHECK(mix_seed(0xA1, 5) != mix_seed(0xB2, 5));
}

TEST_CASE("taylor remainder grows with a wrong coefficient") {
  const auto field = build_synthetic(single_ball(0.5, 0.0, 0.1));
  const HarmonicBasis basis(2);
  const SphereQuadrature quad = SphereQuadrature::standard(2);
  const Projection proj = compute_B(*field, 0.0, basis, quad);

  const double fitted = taylor_remainder(*field, 0.0, proj.coeff, quad);
  CHECK(fitted >= 0.0);
  CHECK(std::isfinite(fitted));

  SymMat off(2);
  off.set(0, 0, 1.0);
  off.set(1, 1, -1.0);
  TraceFreeSym wrong = proj.coeff;
  wrong.axpy(1.0, trace_free_part(off));
  CHECK(taylor_remainder(*field, 0.0, wrong, quad) > fitted + 0.1);
}
