#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "blowup/fields.hpp"
#include "blowup/harmonics.hpp"
#include "blowup/linalg.hpp"

namespace blowup {

// How volume integrals over the inactive set are evaluated.
//   closed_form: per-ball closed forms (synthetic geometry) or the exact
//                node-cube decomposition (grid masks); falls back to
//                stratified sampling for balls straddling a shell boundary,
//                with the fallback recorded, never silent.
//   sampled:     fixed-seed uniform sampling of the shell with the field's
//                inactive indicator; always carries a statistical error.
struct IntegrationSpec {
  enum class Kind { closed_form, sampled };
  Kind kind = Kind::closed_form;
  long samples = 20000;
  std::uint64_t seed = 1;
  int strata = 16;
};

struct SeriesOptions {
  int k_max = 8;
  IntegrationSpec integration;
  long indep_samples = 20000;  // independent cross-check sampler
  int circle_nodes = 64;
  int polar_nodes = 16;
  int azimuth_nodes = 32;
  int qmc_count = 4096;
  int annulus_radial = 48;
  int annulus_angular = 256;
  double kappa_scale = 1.0;  // fault-injection hook used by verification smoke tests

  SphereQuadrature make_quadrature(int dim) const;
};

// Volume moments of the inactive set inside the unit ball at log-scale t.
struct MomentData {
  SymMat second_moment{2};           // integral of x (x) x
  double mass2 = 0.0;                // F: integral of |x|^2
  std::vector<double> annulus_mass;  // F_k over the dyadic annuli, k = 0..k_max
  std::vector<std::uint8_t> annulus_sampled;  // per-k route tag; 0 = pure closed form
  std::vector<double> annulus_sigma;          // per-k statistical error (0 when deterministic)
  double annulus_tail = 0.0;         // remainder below the smallest annulus
  SymMat annulus0_second{2};         // second moment restricted to the outer annulus
  bool closed_form = true;           // no sampled contribution anywhere
  bool totals_closed = true;         // the full-ball row specifically is closed-form
  bool fallback = false;             // closed-form requested but sampling was needed
  double stat_error = 0.0;           // accumulated statistical error on F
};

MomentData compute_moments(const SolutionField& field, double t, const IntegrationSpec& spec,
                           int k_max);

// Projection coordinates of the rescaled field on the sphere.
Projection compute_B(const SolutionField& field, double t, const HarmonicBasis& basis,
                     const SphereQuadrature& quad);

// kappa_n * trace-free part of the second moment.
TraceFreeSym ode_rhs(const SymMat& second_moment, double kappa_scale = 1.0);

// Radial dissipation integrals of x . grad R_t over the inactive set, with an
// independent sampler and the quadratic cross-check -integral of x.A(t)x.
struct IntegralData {
  double I = 0.0, I0 = 0.0;
  double I_err = 0.0, I0_err = 0.0;
  double I_indep = 0.0, I0_indep = 0.0;
  double I_indep_err = 0.0, I0_indep_err = 0.0;
  double I_alt = 0.0, I0_alt = 0.0;  // -A : second moment (exact when grad R = -A x on the set)
  double sup_grad_R_seen = 0.0;      // max |grad R_t| seen at integration points in the annulus
};

IntegralData compute_I(const SolutionField& field, double t, const TraceFreeSym& coeff,
                       const MomentData& moments, const IntegrationSpec& spec,
                       long indep_samples);

// Deterministic dense sampling of sup |grad R_t| over the annulus 1/2 < |x| < 1,
// with local refinement around the maximizer.
struct SupResult {
  double sup = 0.0;
  Vec argmax;
  double resolution = 0.0;  // linear size of the finest sampling cell
  std::size_t samples = 0;
};

SupResult annulus_sup(const SolutionField& field, double t, const TraceFreeSym& coeff,
                      int radial, int angular);

constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

struct MomentRecord {
  double t = 0.0;
  TraceFreeSym coeff{2};               // B(t)
  std::vector<double> sphere_moments;  // quadrature moments m_i of the projection
  MomentData moments;
  IntegralData integrals;
  double eps = 0.0;  // annulus sup of |grad R_t|
  double lyap_lhs = kUnset, lyap_rhs = kUnset, lyap_residual = kUnset;
  double ode_residual = kUnset;  // residual of the interval starting here
};

struct ScaleSeries {
  int dimension = 2;
  FieldMode mode = FieldMode::consistency;
  int k_max = 8;
  std::vector<double> t;
  std::vector<MomentRecord> records;

  double spacing() const;            // uniform spacing; throws if the grid is not uniform
  std::size_t steps_per_halving() const;  // ln 2 / spacing, validated as integral
};

// Sweeps the field through the scale grid and fills every per-scale quantity.
// t values must be strictly increasing and non-negative.
ScaleSeries build_series(const SolutionField& field, std::span<const double> t_grid,
                         const SeriesOptions& opt);

// Per-interval comparison of the projected increment with the integrated
// moment flow; also checks the sphere-moment increments (one per basis
// element). closed_form marks intervals where every ball stayed strictly
// inside the unit ball, where the time integral is exact.
struct IntervalCheck {
  double t0 = 0.0, t1 = 0.0;
  double frob_residual = 0.0;
  std::vector<double> moment_residual;
  bool closed_form = true;
  double stat_error = 0.0;
};

std::vector<IntervalCheck> ode_crosscheck(const ScaleSeries& series, const SolutionField& field,
                                          const SeriesOptions& opt);

// Dyadic consistency F_k(t) = 2^{-k(n+2)} F_0(t + k ln 2), both routes, plus
// the J_k terms and their bounds.
struct DyadicRecord {
  std::size_t scale_index = 0, lookup_index = 0;
  double t = 0.0;
  int k = 0;
  double direct = 0.0;        // F_k(t) from the scale sweep
  double via_scaling = 0.0;   // 2^{-k(n+2)} F_0(t + k ln 2)
  double residual = 0.0;
  bool closed_both = true;    // neither route needed sampling
  double sampled = 0.0;       // independent shell sampler for F_k(t)
  double sampled_err = 0.0;
  double j_term = 0.0;                // J_k(t)
  double j_bound_spectral = 0.0;      // |B(s)-B(t)|_2 F_0(s)
  double j_bound_flow = 0.0;          // kappa int_t^s F dtau * F_0(s)
};

std::vector<DyadicRecord> dyadic_check(const ScaleSeries& series, const SolutionField& field,
                                       const SeriesOptions& opt,
                                       std::span<const std::size_t> scale_indices);

// Midpoint residuals of d/dt (|B|^2/2) = -(kappa/n) F - kappa I per interval.
// Refuses consistency-mode series: the identity needs the gradient to vanish
// on the inactive set.
std::vector<double> lyapunov_residual(const ScaleSeries& series);

// Tail suprema, the dyadic-sum majorant V, and the window inequalities.
struct AbsorptionReport {
  double T = 0.0;
  std::size_t start_index = 0;
  double eta = 0.0;  // sup of eps over [T, end]
  double mu = 0.0;   // sup of F_0 over [T, end]
  double l = 0.0;    // ln 2
  int k_max_used = 0;
  double S1 = 0.0, S2 = 0.0, Mn = 0.0;  // geometric sums and the F majorant
  std::vector<double> V;                // per scale on [T, S_end]
  double V_tail_bound = 0.0;            // bound on the truncated k > k_max part
  double S_end = 0.0;
  double volterra_lhs = 0.0, volterra_rhs = 0.0, volterra_margin = 0.0;
  bool volterra_checked = false;
  bool i0_checked = false;              // solution mode only
  std::vector<double> i0_margin;        // 2 eps F_0 - |I_0| per scale on [T, end]
  double i0_min_margin = 0.0;
};

AbsorptionReport absorption_check(const ScaleSeries& series, double T);

// Sup over sphere quadrature nodes of |u_t - q_coeff| at log-scale t.
double taylor_remainder(const SolutionField& field, double t, const TraceFreeSym& coeff,
                        const SphereQuadrature& quad);

struct DissipationReport {
  int dimension = 2;
  FieldMode mode = FieldMode::consistency;
  double t_start = 0.0, t_end = 0.0;
  std::size_t scale_count = 0;
  double T = 0.0;

  double integral_F = 0.0;      // trapezoid over [T, end]
  double tail_estimate = 0.0;   // fitted extension beyond the window
  double tail_fraction = 0.0;   // tail / (integral + tail)
  double tail_slope = 0.0;
  bool tail_reliable = false;

  double total_variation = 0.0;
  std::vector<double> b_infinity;     // basis coordinates of B(t_end)
  double b_uncertainty = 0.0;         // kappa * tail estimate
  double eta = 0.0, mu = 0.0;
  double taylor_sup = 0.0;

  double max_trace_error = 0.0;       // |tr M - F| over scales
  double min_derivative_margin = 0.0; // kappa F - |ode_rhs| over scales
  double max_partition_error = 0.0;   // |F - sum_k F_k - tail| over scales
  double i0_min_margin = 0.0;
  double volterra_margin = 0.0;
  bool i0_checked = false;
  bool volterra_checked = false;

  std::vector<std::string> notes;
};

DissipationReport convergence_report(const ScaleSeries& series, double T,
                                     const SolutionField& field, const SeriesOptions& opt);

// Deterministic seed mixing for per-task sampling streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0,
                       std::uint64_t d = 0);

}  // namespace blowup
