#include "blowup/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "blowup/errors.hpp"

namespace blowup {
namespace {

// splitmix64; one instance per sampling task, seeded through mix_seed so
// streams never alias across scales, shells, or balls.
struct SplitMix {
  std::uint64_t state = 0;

  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }       // [0, 1)
  double uniform_pos() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  void direction(std::span<double> out) {
    for (;;) {
      double s = 0.0;
      for (double& c : out) {
        c = normal();
        s += c * c;
      }
      if (s > 1e-24) {
        const double inv = 1.0 / std::sqrt(s);
        for (double& c : out) c *= inv;
        return;
      }
    }
  }
};

struct Shell {
  double lo = 0.0;
  double hi = 1.0;
  // Half-open in r^2 so adjacent shells partition exactly.
  bool contains2(double r2) const { return r2 >= lo * lo && r2 < hi * hi; }
};

enum class Overlap { outside, inside, straddle };

Overlap classify_ball(double dist, double rho, const Shell& sh) {
  if (dist - rho >= sh.hi || dist + rho <= sh.lo) return Overlap::outside;
  if (dist + rho <= sh.hi && dist - rho >= sh.lo) return Overlap::inside;
  return Overlap::straddle;
}

// Route tags stored in MomentData::annulus_sampled.
constexpr std::uint8_t kRouteClosed = 0;
constexpr std::uint8_t kRouteBallSampled = 1;
constexpr std::uint8_t kRouteCubes = 2;
constexpr std::uint8_t kRouteShellSampled = 3;

struct RegionMoments {
  SymMat m;
  double f = 0.0;
  double f_sigma = 0.0;
  explicit RegionMoments(int n) : m(n) {}

  void accumulate(const RegionMoments& other) {
    m.axpy(1.0, other.m);
    f += other.f;
    f_sigma = std::hypot(f_sigma, other.f_sigma);
  }
};

struct ScalarEstimate {
  double value = 0.0;
  double sigma = 0.0;
};

// Shared core of the stratified samplers: radial strata of equal volume, one
// uniform radius draw plus an isotropic direction per point. `place` maps
// (stratum fraction u, direction) to a point and returns its |x|^2; `weigh`
// is the indicator-masked integrand.
template <class Place, class Integrand>
ScalarEstimate stratified_scalar(long samples, int strata, std::uint64_t seed, int n,
                                 double region_volume, Place&& place, Integrand&& f) {
  const int s_count = std::max(1, strata);
  const long per = std::max<long>(1, (samples + s_count - 1) / s_count);
  SplitMix rng{seed};
  Vec dir(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
  const double stratum_vol = region_volume / s_count;
  double value = 0.0, var = 0.0;
  for (int s = 0; s < s_count; ++s) {
    double sum = 0.0, sumsq = 0.0;
    for (long p = 0; p < per; ++p) {
      const double u = (s + rng.uniform()) / s_count;
      rng.direction(dir);
      const double r2 = place(u, dir, x);
      const double v = f(std::span<const double>(x), r2);
      sum += v;
      sumsq += v * v;
    }
    value += stratum_vol * (sum / per);
    if (per > 1) {
      const double sample_var = std::max(0.0, (sumsq - sum * sum / per) / (per - 1));
      var += stratum_vol * stratum_vol * sample_var / per;
    }
  }
  return {value, std::sqrt(var)};
}

template <class Integrand>
ScalarEstimate sample_ball_scalar(std::span<const double> center, double rho, const Shell& sh,
                                  long samples, int strata, std::uint64_t seed, int n,
                                  Integrand&& f) {
  const double vol = ball_volume(n) * std::pow(rho, n);
  auto place = [&](double u, const Vec& dir, Vec& x) {
    const double r = rho * std::pow(u, 1.0 / n);
    double r2 = 0.0;
    for (int k = 0; k < n; ++k) {
      x[static_cast<std::size_t>(k)] = center[static_cast<std::size_t>(k)] +
                                       r * dir[static_cast<std::size_t>(k)];
      r2 += x[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
    }
    return r2;
  };
  auto masked = [&](std::span<const double> x, double r2) {
    return sh.contains2(r2) ? f(x) : 0.0;
  };
  return stratified_scalar(samples, strata, seed, n, vol, place, masked);
}

template <class Keep, class Integrand>
ScalarEstimate sample_shell_scalar(Keep&& keep, const Shell& sh, long samples, int strata,
                                   std::uint64_t seed, int n, Integrand&& f) {
  const double lon = std::pow(sh.lo, n);
  const double hin = std::pow(sh.hi, n);
  const double vol = ball_volume(n) * (hin - lon);
  auto place = [&](double u, const Vec& dir, Vec& x) {
    const double r = std::pow(lon + u * (hin - lon), 1.0 / n);
    for (int k = 0; k < n; ++k) x[static_cast<std::size_t>(k)] = r * dir[static_cast<std::size_t>(k)];
    return r * r;
  };
  auto masked = [&](std::span<const double> x, double) { return keep(x) ? f(x) : 0.0; };
  return stratified_scalar(samples, strata, seed, n, vol, place, masked);
}

// Second moments need every matrix entry in one pass, so they keep their own
// loop instead of going through stratified_scalar entry by entry.
template <class Place, class Indicator>
RegionMoments stratified_moments(long samples, int strata, std::uint64_t seed, int n,
                                 double region_volume, Place&& place, Indicator&& keep) {
  const int s_count = std::max(1, strata);
  const long per = std::max<long>(1, (samples + s_count - 1) / s_count);
  const long total = per * s_count;
  const double w = region_volume / static_cast<double>(total);
  const double stratum_vol = region_volume / s_count;
  RegionMoments out(n);
  SplitMix rng{seed};
  Vec dir(static_cast<std::size_t>(n)), x(static_cast<std::size_t>(n));
  double mean_acc = 0.0, var_acc = 0.0;
  for (int s = 0; s < s_count; ++s) {
    double sum = 0.0, sumsq = 0.0;
    for (long p = 0; p < per; ++p) {
      const double u = (s + rng.uniform()) / s_count;
      rng.direction(dir);
      const double r2 = place(u, dir, x);
      double v = 0.0;
      if (keep(std::span<const double>(x), r2)) {
        v = r2;
        for (int i = 0; i < n; ++i)
          for (int j = i; j < n; ++j)
            out.m.add(i, j, w * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)]);
      }
      sum += v;
      sumsq += v * v;
    }
    mean_acc += stratum_vol * (sum / per);
    if (per > 1) {
      const double sample_var = std::max(0.0, (sumsq - sum * sum / per) / (per - 1));
      var_acc += stratum_vol * stratum_vol * sample_var / per;
    }
  }
  out.f = mean_acc;
  out.f_sigma = std::sqrt(var_acc);
  return out;
}

RegionMoments sample_ball_moments(std::span<const double> center, double rho, const Shell& sh,
                                  long samples, int strata, std::uint64_t seed, int n) {
  const double vol = ball_volume(n) * std::pow(rho, n);
  auto place = [&](double u, const Vec& dir, Vec& x) {
    const double r = rho * std::pow(u, 1.0 / n);
    double r2 = 0.0;
    for (int k = 0; k < n; ++k) {
      x[static_cast<std::size_t>(k)] = center[static_cast<std::size_t>(k)] +
                                       r * dir[static_cast<std::size_t>(k)];
      r2 += x[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
    }
    return r2;
  };
  auto keep = [&](std::span<const double>, double r2) { return sh.contains2(r2); };
  return stratified_moments(samples, strata, seed, n, vol, place, keep);
}

template <class Keep>
RegionMoments sample_shell_moments(Keep&& inactive, const Shell& sh, long samples, int strata,
                                   std::uint64_t seed, int n) {
  const double lon = std::pow(sh.lo, n);
  const double hin = std::pow(sh.hi, n);
  const double vol = ball_volume(n) * (hin - lon);
  auto place = [&](double u, const Vec& dir, Vec& x) {
    const double r = std::pow(lon + u * (hin - lon), 1.0 / n);
    for (int k = 0; k < n; ++k) x[static_cast<std::size_t>(k)] = r * dir[static_cast<std::size_t>(k)];
    return r * r;
  };
  auto keep = [&](std::span<const double> x, double) { return inactive(x); };
  return stratified_moments(samples, strata, seed, n, vol, place, keep);
}

// Exact closed forms for a ball fully inside the shell.
void add_closed_ball(RegionMoments& out, std::span<const double> center, double rho, int n) {
  const double vol = ball_volume(n) * std::pow(rho, n);
  const double iso = rho * rho / (n + 2);
  double d2 = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j)
      out.m.add(i, j, vol * (center[static_cast<std::size_t>(i)] * center[static_cast<std::size_t>(j)] +
                             (i == j ? iso : 0.0)));
    d2 += center[static_cast<std::size_t>(i)] * center[static_cast<std::size_t>(i)];
  }
  out.f += vol * (d2 + n * iso);
}

SymMat closed_ball_second_moment(std::span<const double> center, double rho, int n) {
  RegionMoments rm(n);
  add_closed_ball(rm, center, rho, n);
  return rm.m;
}

// Visits quadrature points of (scaled cubes) intersected with the shell.
// Fully inside cubes get a 2-point Gauss product rule (exact through cubics);
// straddling cubes are subdivided and sampled at sub-cell midpoints.
template <class Emit>
void cube_points(const MaskCubes& cubes, double scale, const Shell& sh, Emit&& emit) {
  const int n = cubes.dimension;
  const double side = cubes.side * scale;
  const double half = 0.5 * side;
  const double gauss_off = half / std::numbers::sqrt3;
  const double w_gauss = std::pow(side, n) / static_cast<double>(1 << n);
  constexpr int kSub = 4;
  const double sub_side = side / kSub;
  const double w_sub = std::pow(sub_side, n);
  int sub_total = 1;
  for (int k = 0; k < n; ++k) sub_total *= kSub;

  const double lo2 = sh.lo * sh.lo;
  const double hi2 = sh.hi * sh.hi;
  Vec c(static_cast<std::size_t>(n)), p(static_cast<std::size_t>(n));
  const std::size_t count = cubes.count();
  for (std::size_t ci = 0; ci < count; ++ci) {
    const auto base = cubes.center(ci);
    double rmin2 = 0.0, rmax2 = 0.0;
    for (int k = 0; k < n; ++k) {
      c[static_cast<std::size_t>(k)] = scale * base[static_cast<std::size_t>(k)];
      const double lo = c[static_cast<std::size_t>(k)] - half;
      const double hi = c[static_cast<std::size_t>(k)] + half;
      const double dmin = std::max({0.0, lo, -hi});
      const double dmax = std::max(std::abs(lo), std::abs(hi));
      rmin2 += dmin * dmin;
      rmax2 += dmax * dmax;
    }
    if (rmax2 <= lo2 || rmin2 >= hi2) continue;
    if (rmin2 >= lo2 && rmax2 <= hi2) {
      for (int bits = 0; bits < (1 << n); ++bits) {
        for (int k = 0; k < n; ++k)
          p[static_cast<std::size_t>(k)] =
              c[static_cast<std::size_t>(k)] + (((bits >> k) & 1) ? gauss_off : -gauss_off);
        emit(std::span<const double>(p), w_gauss);
      }
    } else {
      for (int flat = 0; flat < sub_total; ++flat) {
        int rem = flat;
        double r2 = 0.0;
        for (int k = 0; k < n; ++k) {
          const int j = rem % kSub;
          rem /= kSub;
          p[static_cast<std::size_t>(k)] =
              c[static_cast<std::size_t>(k)] - half + (j + 0.5) * sub_side;
          r2 += p[static_cast<std::size_t>(k)] * p[static_cast<std::size_t>(k)];
        }
        if (sh.contains2(r2)) emit(std::span<const double>(p), w_sub);
      }
    }
  }
}

std::vector<Shell> moment_shells(int k_max) {
  std::vector<Shell> shells;
  shells.push_back({0.0, 1.0});
  for (int k = 0; k <= k_max; ++k)
    shells.push_back({std::pow(2.0, -(k + 1)), std::pow(2.0, -k)});
  shells.push_back({0.0, std::pow(2.0, -(k_max + 1))});
  return shells;
}

double trapezoid(std::span<const double> t, const std::vector<double>& f, std::size_t i0,
                 std::size_t i1) {
  double acc = 0.0;
  for (std::size_t i = i0; i < i1; ++i)
    acc += 0.5 * (f[i] + f[i + 1]) * (t[i + 1] - t[i]);
  return acc;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  std::uint64_t h = 0x9e3779b97f4a7c15ull;
  for (std::uint64_t x : {a, b, c, d}) {
    SplitMix sm{h ^ (x * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull)};
    h = sm.next();
  }
  return h;
}

SphereQuadrature SeriesOptions::make_quadrature(int dim) const {
  if (dim == 2) return SphereQuadrature::circle(circle_nodes);
  if (dim == 3) return SphereQuadrature::sphere_product(polar_nodes, azimuth_nodes);
  return SphereQuadrature::quasi_random(dim, qmc_count);
}

MomentData compute_moments(const SolutionField& field, double t, const IntegrationSpec& spec,
                           int k_max) {
  if (k_max < 0) throw InvalidArgument("compute_moments: k_max must be nonnegative");
  if (!std::isfinite(t)) throw InvalidArgument("compute_moments: log-scale must be finite");
  const int n = field.dimension();
  const double scale = std::exp(t);
  const double pullback = std::exp(-t);
  const auto shells = moment_shells(k_max);

  MomentData out;
  out.second_moment = SymMat(n);
  out.annulus0_second = SymMat(n);
  out.annulus_mass.assign(static_cast<std::size_t>(k_max) + 1, 0.0);
  out.annulus_sampled.assign(static_cast<std::size_t>(k_max) + 1, kRouteClosed);
  out.annulus_sigma.assign(static_cast<std::size_t>(k_max) + 1, 0.0);

  // Every shell draws from its own seed stream, so the per-shell errors are
  // independent and combine in quadrature. The aggregate also bounds the
  // partition residual (annuli + tail vs the total).
  double var = 0.0;
  auto apply = [&](std::size_t sid, const RegionMoments& rm, std::uint8_t route) {
    var += rm.f_sigma * rm.f_sigma;
    if (sid == 0) {
      out.second_moment = rm.m;
      out.mass2 = rm.f;
      out.totals_closed = route == kRouteClosed;
    } else if (sid == shells.size() - 1) {
      out.annulus_tail = rm.f;
    } else {
      const std::size_t k = sid - 1;
      out.annulus_mass[k] = rm.f;
      out.annulus_sampled[k] = route;
      out.annulus_sigma[k] = rm.f_sigma;
      if (k == 0) out.annulus0_second = rm.m;
    }
  };

  auto inactive_here = [&field, pullback, y = Vec(), n](std::span<const double> x) mutable {
    y.assign(x.begin(), x.end());
    for (int k = 0; k < n; ++k) y[static_cast<std::size_t>(k)] *= pullback;
    return field.inactive(y);
  };

  const auto balls = field.ball_geometry();
  const auto cubes = field.mask_geometry();

  if (spec.kind == IntegrationSpec::Kind::sampled || (!balls && !cubes)) {
    out.closed_form = false;
    out.fallback = spec.kind != IntegrationSpec::Kind::sampled;
    for (std::size_t sid = 0; sid < shells.size(); ++sid) {
      const auto rm = sample_shell_moments(inactive_here, shells[sid], spec.samples, spec.strata,
                                           mix_seed(spec.seed, 0xA1, sid), n);
      apply(sid, rm, kRouteShellSampled);
    }
    out.stat_error = std::sqrt(var);
    return out;
  }

  if (balls) {
    for (std::size_t sid = 0; sid < shells.size(); ++sid) {
      RegionMoments total(n);
      std::uint8_t route = kRouteClosed;
      for (std::size_t bi = 0; bi < balls->balls.size(); ++bi) {
        const auto& ball = balls->balls[bi];
        Vec c(ball.center);
        for (double& v : c) v *= scale;
        const double rho = ball.radius * scale;
        const double dist = norm(c);
        switch (classify_ball(dist, rho, shells[sid])) {
          case Overlap::outside:
            break;
          case Overlap::inside:
            add_closed_ball(total, c, rho, n);
            break;
          case Overlap::straddle: {
            const auto rm = sample_ball_moments(c, rho, shells[sid], spec.samples, spec.strata,
                                                mix_seed(spec.seed, 0xB2, sid, bi), n);
            total.accumulate(rm);
            route = kRouteBallSampled;
            out.fallback = true;
            out.closed_form = false;
            break;
          }
        }
      }
      apply(sid, total, route);
    }
    out.stat_error = std::sqrt(var);
    return out;
  }

  // Grid mask: the cube decomposition is exact geometry with a deterministic
  // product rule, so it is the closed-form route for solved fields.
  for (std::size_t sid = 0; sid < shells.size(); ++sid) {
    RegionMoments rm(n);
    cube_points(*cubes, scale, shells[sid], [&](std::span<const double> x, double w) {
      double r2 = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j)
          rm.m.add(i, j, w * x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(j)]);
        r2 += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
      }
      rm.f += w * r2;
    });
    apply(sid, rm, kRouteCubes);
  }
  out.stat_error = std::sqrt(var);
  return out;
}

Projection compute_B(const SolutionField& field, double t, const HarmonicBasis& basis,
                     const SphereQuadrature& quad) {
  const int n = field.dimension();
  if (basis.dimension() != n || quad.dimension() != n)
    throw InvalidArgument("compute_B: basis/quadrature dimension mismatch");
  const double stretch = std::exp(2.0 * t);
  const double pullback = std::exp(-t);
  std::vector<double> samples(quad.size());
  Vec y(static_cast<std::size_t>(n));
  for (std::size_t q = 0; q < quad.size(); ++q) {
    const auto node = quad.node(q);
    for (int k = 0; k < n; ++k) y[static_cast<std::size_t>(k)] = pullback * node[static_cast<std::size_t>(k)];
    samples[q] = stretch * field.value(y);
  }
  return project_samples(samples, basis, quad);
}

TraceFreeSym ode_rhs(const SymMat& second_moment, double kappa_scale) {
  return trace_free_part(second_moment).scaled(kappa(second_moment.dim()) * kappa_scale);
}

IntegralData compute_I(const SolutionField& field, double t, const TraceFreeSym& coeff,
                       const MomentData& moments, const IntegrationSpec& spec,
                       long indep_samples) {
  const int n = field.dimension();
  if (coeff.dim() != n) throw InvalidArgument("compute_I: coefficient dimension mismatch");
  const double stretch = std::exp(t);
  const double pullback = std::exp(-t);
  const SymMat hess = QuadraticProfile(coeff).hessian();

  IntegralData out;
  double sup_seen = 0.0;
  Vec y(static_cast<std::size_t>(n));
  // x . grad R_t with R_t = u_t - q_B; tracks sup |grad R_t| on the annulus.
  auto radial_defect = [&](std::span<const double> x) {
    for (int k = 0; k < n; ++k) y[static_cast<std::size_t>(k)] = pullback * x[static_cast<std::size_t>(k)];
    const Vec g = field.gradient(y);
    const Vec ax = hess.apply(x);
    double s = 0.0, g2 = 0.0, r2 = 0.0;
    for (int k = 0; k < n; ++k) {
      const double gk = stretch * g[static_cast<std::size_t>(k)] - ax[static_cast<std::size_t>(k)];
      s += x[static_cast<std::size_t>(k)] * gk;
      g2 += gk * gk;
      r2 += x[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(k)];
    }
    if (r2 >= 0.25 && r2 <= 1.0) sup_seen = std::max(sup_seen, std::sqrt(g2));
    return s;
  };

  auto inactive_here = [&field, pullback, yy = Vec(), n](std::span<const double> x) mutable {
    yy.assign(x.begin(), x.end());
    for (int k = 0; k < n; ++k) yy[static_cast<std::size_t>(k)] *= pullback;
    return field.inactive(yy);
  };

  const Shell shells[2] = {{0.0, 1.0}, {0.5, 1.0}};
  const auto balls = field.ball_geometry();
  const auto cubes = field.mask_geometry();

  for (std::size_t sid = 0; sid < 2; ++sid) {
    double value = 0.0, var = 0.0;
    if (spec.kind == IntegrationSpec::Kind::closed_form && cubes) {
      cube_points(*cubes, stretch, shells[sid],
                  [&](std::span<const double> x, double w) { value += w * radial_defect(x); });
    } else if (spec.kind == IntegrationSpec::Kind::closed_form && balls) {
      for (std::size_t bi = 0; bi < balls->balls.size(); ++bi) {
        const auto& ball = balls->balls[bi];
        Vec c(ball.center);
        for (double& v : c) v *= stretch;
        const double rho = ball.radius * stretch;
        if (classify_ball(norm(c), rho, shells[sid]) == Overlap::outside) continue;
        const auto est = sample_ball_scalar(c, rho, shells[sid], spec.samples, spec.strata,
                                            mix_seed(spec.seed, 0xC3, sid, bi), n, radial_defect);
        value += est.value;
        var += est.sigma * est.sigma;
      }
    } else {
      const auto est = sample_shell_scalar(inactive_here, shells[sid], spec.samples, spec.strata,
                                           mix_seed(spec.seed, 0xC4, sid), n, radial_defect);
      value = est.value;
      var = est.sigma * est.sigma;
    }
    if (sid == 0) {
      out.I = value;
      out.I_err = std::sqrt(var);
    } else {
      out.I0 = value;
      out.I0_err = std::sqrt(var);
    }
  }

  for (std::size_t sid = 0; sid < 2; ++sid) {
    const auto est = sample_shell_scalar(inactive_here, shells[sid], indep_samples, spec.strata,
                                         mix_seed(spec.seed, 0xC5, sid), n, radial_defect);
    if (sid == 0) {
      out.I_indep = est.value;
      out.I_indep_err = est.sigma;
    } else {
      out.I0_indep = est.value;
      out.I0_indep_err = est.sigma;
    }
  }

  // When the gradient vanishes on the inactive set, x.grad R = -x.Ax there.
  out.I_alt = -hess.frob_dot(moments.second_moment);
  out.I0_alt = -hess.frob_dot(moments.annulus0_second);
  out.sup_grad_R_seen = sup_seen;
  return out;
}

SupResult annulus_sup(const SolutionField& field, double t, const TraceFreeSym& coeff,
                      int radial, int angular) {
  const int n = field.dimension();
  if (coeff.dim() != n) throw InvalidArgument("annulus_sup: coefficient dimension mismatch");
  if (n != 2 && n != 3)
    throw InvalidArgument("annulus_sup: dense annulus scan supports dimensions 2 and 3");
  const double stretch = std::exp(t);
  const double pullback = std::exp(-t);
  const SymMat hess = QuadraticProfile(coeff).hessian();
  radial = std::max(4, radial);
  angular = std::max(8, angular);

  SupResult out;
  out.argmax.assign(static_cast<std::size_t>(n), 0.0);
  Vec y(static_cast<std::size_t>(n));
  auto defect_norm = [&](std::span<const double> x) {
    for (int k = 0; k < n; ++k) y[static_cast<std::size_t>(k)] = pullback * x[static_cast<std::size_t>(k)];
    const Vec g = field.gradient(y);
    const Vec ax = hess.apply(x);
    double g2 = 0.0;
    for (int k = 0; k < n; ++k) {
      const double gk = stretch * g[static_cast<std::size_t>(k)] - ax[static_cast<std::size_t>(k)];
      g2 += gk * gk;
    }
    return std::sqrt(g2);
  };
  auto visit = [&](const Vec& x) {
    const double v = defect_norm(x);
    ++out.samples;
    if (v > out.sup) {
      out.sup = v;
      out.argmax = x;
    }
  };

  const double dr = 0.5 / radial;
  Vec x(static_cast<std::size_t>(n));
  double spacing = 0.0;
  if (n == 2) {
    const double dth = 2.0 * std::numbers::pi / angular;
    for (int i = 0; i < radial; ++i) {
      const double r = 0.5 + (i + 0.5) * dr;
      for (int j = 0; j < angular; ++j) {
        const double th = j * dth;
        x[0] = r * std::cos(th);
        x[1] = r * std::sin(th);
        visit(x);
      }
    }
    spacing = std::max(dr, dth);
  } else {
    const int polar = std::max(8, angular / 8);
    const int azim = std::max(16, angular / 4);
    const double dmu = 2.0 / polar;
    const double dph = 2.0 * std::numbers::pi / azim;
    for (int i = 0; i < radial; ++i) {
      const double r = 0.5 + (i + 0.5) * dr;
      for (int p = 0; p < polar; ++p) {
        const double mu = -1.0 + (p + 0.5) * dmu;
        const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
        for (int a = 0; a < azim; ++a) {
          const double ph = a * dph;
          x[0] = r * s * std::cos(ph);
          x[1] = r * s * std::sin(ph);
          x[2] = r * mu;
          visit(x);
        }
      }
    }
    spacing = std::max({dr, dmu, dph});
  }

  // Local refinement around the running maximizer.
  double width = spacing;
  for (int round = 0; round < 3; ++round) {
    const Vec best = out.argmax;
    const double step = width / 2.0;
    const int points = 5;
    if (n == 2) {
      for (int i = 0; i < points; ++i)
        for (int j = 0; j < points; ++j) {
          x[0] = best[0] + (i - 2) * step / 2.0;
          x[1] = best[1] + (j - 2) * step / 2.0;
          const double r2 = x[0] * x[0] + x[1] * x[1];
          if (r2 < 0.25 || r2 > 1.0) continue;
          visit(x);
        }
    } else {
      for (int i = 0; i < points; ++i)
        for (int j = 0; j < points; ++j)
          for (int k = 0; k < points; ++k) {
            x[0] = best[0] + (i - 2) * step / 2.0;
            x[1] = best[1] + (j - 2) * step / 2.0;
            x[2] = best[2] + (k - 2) * step / 2.0;
            const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
            if (r2 < 0.25 || r2 > 1.0) continue;
            visit(x);
          }
    }
    width /= 4.0;
  }
  out.resolution = width;
  return out;
}

double ScaleSeries::spacing() const {
  if (t.size() < 2) throw InvalidArgument("scale series needs at least two scales");
  const double d = t[1] - t[0];
  if (d <= 0.0) throw ConfigError("scale grid must be strictly increasing");
  for (std::size_t i = 0; i + 1 < t.size(); ++i)
    if (std::abs(t[i + 1] - t[i] - d) > 1e-9 * std::max(1.0, std::abs(d)))
      throw ConfigError("scale grid is not uniform");
  return d;
}

std::size_t ScaleSeries::steps_per_halving() const {
  const double d = spacing();
  const long long steps = std::llround(std::numbers::ln2 / d);
  if (steps < 1 || std::abs(static_cast<double>(steps) * d - std::numbers::ln2) > 1e-9)
    throw ConfigError("scale spacing must divide ln 2 for dyadic lookups");
  return static_cast<std::size_t>(steps);
}

ScaleSeries build_series(const SolutionField& field, std::span<const double> t_grid,
                         const SeriesOptions& opt) {
  const int n = field.dimension();
  if (t_grid.size() < 2) throw InvalidArgument("build_series: need at least two scales");
  if (t_grid.front() < 0.0)
    throw InvalidArgument("build_series: log-scales must be nonnegative");
  const double d = t_grid[1] - t_grid[0];
  if (d <= 0.0) throw ConfigError("build_series: scale grid must increase");
  for (std::size_t i = 0; i + 1 < t_grid.size(); ++i)
    if (std::abs(t_grid[i + 1] - t_grid[i] - d) > 1e-9 * std::max(1.0, d))
      throw ConfigError("build_series: scale grid is not uniform");

  const HarmonicBasis basis(n);
  const SphereQuadrature quad = opt.make_quadrature(n);

  ScaleSeries series;
  series.dimension = n;
  series.mode = field.mode();
  series.k_max = opt.k_max;
  series.t.assign(t_grid.begin(), t_grid.end());
  series.records.reserve(t_grid.size());

  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double ti = t_grid[i];
    MomentRecord rec;
    rec.t = ti;
    rec.coeff = TraceFreeSym(n);
    Projection proj = compute_B(field, ti, basis, quad);
    rec.coeff = proj.coeff;
    rec.sphere_moments = std::move(proj.moments);

    IntegrationSpec per_scale = opt.integration;
    per_scale.seed = mix_seed(opt.integration.seed, 0x5CA1E, i);
    rec.moments = compute_moments(field, ti, per_scale, opt.k_max);
    rec.integrals = compute_I(field, ti, rec.coeff, rec.moments, per_scale, opt.indep_samples);
    const SupResult sup = annulus_sup(field, ti, rec.coeff, opt.annulus_radial, opt.annulus_angular);
    rec.eps = std::max(sup.sup, rec.integrals.sup_grad_R_seen);
    series.records.push_back(std::move(rec));
  }

  // Lyapunov columns only make sense when the gradient vanishes on the
  // inactive set; for consistency profiles they stay unset.
  const std::size_t count = series.records.size();
  if (series.mode == FieldMode::solution && count >= 3) {
    const double kap = kappa(n);
    std::vector<double> energy(count), rhs(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& rec = series.records[i];
      const double b = rec.coeff.frob_norm();
      energy[i] = 0.5 * b * b;
      rhs[i] = -(kap / n) * rec.moments.mass2 - kap * rec.integrals.I;
    }
    for (std::size_t i = 0; i < count; ++i) {
      double lhs;
      if (i == 0)
        lhs = (-3.0 * energy[0] + 4.0 * energy[1] - energy[2]) / (2.0 * d);
      else if (i + 1 == count)
        lhs = (3.0 * energy[i] - 4.0 * energy[i - 1] + energy[i - 2]) / (2.0 * d);
      else
        lhs = (energy[i + 1] - energy[i - 1]) / (2.0 * d);
      auto& rec = series.records[i];
      rec.lyap_lhs = lhs;
      rec.lyap_rhs = rhs[i];
      rec.lyap_residual = std::abs(lhs - rhs[i]);
    }
  }
  return series;
}

std::vector<IntervalCheck> ode_crosscheck(const ScaleSeries& series, const SolutionField& field,
                                          const SeriesOptions& opt) {
  const int n = series.dimension;
  const HarmonicBasis basis(n);
  const double kap = kappa(n) * opt.kappa_scale;
  const auto balls = field.ball_geometry();
  const auto& recs = series.records;
  std::vector<IntervalCheck> checks;
  if (recs.size() < 2) return checks;
  checks.reserve(recs.size() - 1);

  constexpr int kPanels = 32;  // composite Simpson panels per straddle window

  for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
    const double t0 = recs[i].t;
    const double t1 = recs[i + 1].t;
    IntervalCheck chk;
    chk.t0 = t0;
    chk.t1 = t1;

    SymMat flow(n);  // integral of the second moment over [t0, t1]
    double var = 0.0;

    if (balls) {
      const Shell unit{0.0, 1.0};
      for (std::size_t bi = 0; bi < balls->balls.size(); ++bi) {
        const auto& ball = balls->balls[bi];
        const double dist = norm(ball.center);
        const double exit_t = -std::log(dist + ball.radius);  // last scale fully inside
        const double gone_t = -std::log(dist - ball.radius);  // first scale fully outside
        const double a_closed = t0;
        const double b_closed = std::min(t1, exit_t);
        if (b_closed > a_closed) {
          const double growth =
              (std::exp((n + 2) * b_closed) - std::exp((n + 2) * a_closed)) / (n + 2);
          flow.axpy(growth, closed_ball_second_moment(ball.center, ball.radius, n));
        }
        const double a_mid = std::max(t0, exit_t);
        const double b_mid = std::min(t1, gone_t);
        if (b_mid > a_mid) {
          chk.closed_form = false;
          const double h = (b_mid - a_mid) / kPanels;
          for (int j = 0; j <= kPanels; ++j) {
            const double tau = a_mid + j * h;
            const double wj = (j == 0 || j == kPanels) ? h / 3.0
                              : (j % 2 == 1)           ? 4.0 * h / 3.0
                                                       : 2.0 * h / 3.0;
            Vec c(ball.center);
            for (double& v : c) v *= std::exp(tau);
            const auto rm =
                sample_ball_moments(c, ball.radius * std::exp(tau), unit, opt.integration.samples,
                                    opt.integration.strata,
                                    mix_seed(opt.integration.seed, 0x0DE, (i << 16) ^ bi, j), n);
            flow.axpy(wj, rm.m);
            var += (wj * rm.f_sigma) * (wj * rm.f_sigma);
          }
        }
      }
    } else {
      // Deterministic three-point Simpson using the endpoint sweeps plus one
      // midpoint evaluation.
      chk.closed_form = false;
      IntegrationSpec mid_spec = opt.integration;
      mid_spec.seed = mix_seed(opt.integration.seed, 0x0DF, i);
      const MomentData mid = compute_moments(field, 0.5 * (t0 + t1), mid_spec, 0);
      const double h = t1 - t0;
      flow.axpy(h / 6.0, recs[i].moments.second_moment);
      flow.axpy(4.0 * h / 6.0, mid.second_moment);
      flow.axpy(h / 6.0, recs[i + 1].moments.second_moment);
      var += mid.stat_error * mid.stat_error * (4.0 * h / 6.0) * (4.0 * h / 6.0);
    }

    const TraceFreeSym diff = recs[i + 1].coeff - recs[i].coeff;
    const TraceFreeSym predicted = trace_free_part(flow).scaled(kap);
    chk.frob_residual = (diff - predicted).frob_norm();
    chk.stat_error = std::sqrt(var);

    chk.moment_residual.resize(static_cast<std::size_t>(basis.size()));
    for (int j = 0; j < basis.size(); ++j) {
      const double dm = recs[i + 1].sphere_moments[static_cast<std::size_t>(j)] -
                        recs[i].sphere_moments[static_cast<std::size_t>(j)];
      const double pred = 0.5 * basis.element(j).frob_dot(flow);
      chk.moment_residual[static_cast<std::size_t>(j)] = std::abs(dm - pred);
    }
    checks.push_back(std::move(chk));
  }
  return checks;
}

std::vector<DyadicRecord> dyadic_check(const ScaleSeries& series, const SolutionField& field,
                                       const SeriesOptions& opt,
                                       std::span<const std::size_t> scale_indices) {
  const int n = series.dimension;
  const std::size_t steps = series.steps_per_halving();
  const auto& recs = series.records;
  const std::uint64_t base_seed = opt.integration.seed;
  std::vector<DyadicRecord> out;

  auto inactive_at = [&field, n](double t) {
    const double pullback = std::exp(-t);
    return [&field, pullback, y = Vec(), n](std::span<const double> x) mutable {
      y.assign(x.begin(), x.end());
      for (int k = 0; k < n; ++k) y[static_cast<std::size_t>(k)] *= pullback;
      return field.inactive(y);
    };
  };

  for (const std::size_t idx : scale_indices) {
    if (idx >= recs.size()) throw InvalidArgument("dyadic_check: scale index out of range");
    for (int k = 0; k <= series.k_max; ++k) {
      const std::size_t lookup = idx + static_cast<std::size_t>(k) * steps;
      if (lookup >= recs.size()) break;
      DyadicRecord rec;
      rec.scale_index = idx;
      rec.lookup_index = lookup;
      rec.t = recs[idx].t;
      rec.k = k;
      rec.direct = recs[idx].moments.annulus_mass[static_cast<std::size_t>(k)];
      const double factor = std::pow(2.0, -static_cast<double>(k * (n + 2)));
      rec.via_scaling = factor * recs[lookup].moments.annulus_mass[0];
      rec.residual = std::abs(rec.direct - rec.via_scaling);
      rec.closed_both =
          recs[idx].moments.annulus_sampled[static_cast<std::size_t>(k)] == kRouteClosed &&
          recs[lookup].moments.annulus_sampled[0] == kRouteClosed;

      const Shell shell{std::pow(2.0, -(k + 1)), std::pow(2.0, -k)};
      auto keep = inactive_at(rec.t);
      const auto est = sample_shell_scalar(
          keep, shell, opt.indep_samples, opt.integration.strata,
          mix_seed(base_seed, 0xD7AD, idx, static_cast<std::uint64_t>(k)), n,
          [](std::span<const double> x) { return dot(x, x); });
      rec.sampled = est.value;
      rec.sampled_err = est.sigma;

      const TraceFreeSym diff = recs[lookup].coeff - recs[idx].coeff;
      rec.j_term = diff.frob_dot(recs[lookup].moments.annulus0_second);
      const double f0_s = recs[lookup].moments.annulus_mass[0];
      rec.j_bound_spectral = diff.spectral_norm() * f0_s;
      std::vector<double> mass(recs.size());
      for (std::size_t m = idx; m <= lookup; ++m) mass[m] = recs[m].moments.mass2;
      rec.j_bound_flow = kappa(n) * trapezoid(series.t, mass, idx, lookup) * f0_s;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<double> lyapunov_residual(const ScaleSeries& series) {
  if (series.mode != FieldMode::solution)
    throw ModeError(
        "lyapunov_residual: needs a solution-mode field; consistency profiles keep a "
        "nonvanishing gradient on the inactive set");
  const auto& recs = series.records;
  if (recs.size() < 2) throw InvalidArgument("lyapunov_residual: need at least two scales");
  const int n = series.dimension;
  const double kap = kappa(n);
  std::vector<double> out(recs.size() - 1);
  for (std::size_t i = 0; i + 1 < recs.size(); ++i) {
    const double e0 = 0.5 * recs[i].coeff.frob_norm() * recs[i].coeff.frob_norm();
    const double e1 = 0.5 * recs[i + 1].coeff.frob_norm() * recs[i + 1].coeff.frob_norm();
    const double lhs = (e1 - e0) / (recs[i + 1].t - recs[i].t);
    const double rhs0 = -(kap / n) * recs[i].moments.mass2 - kap * recs[i].integrals.I;
    const double rhs1 = -(kap / n) * recs[i + 1].moments.mass2 - kap * recs[i + 1].integrals.I;
    out[i] = std::abs(lhs - 0.5 * (rhs0 + rhs1));
  }
  return out;
}

AbsorptionReport absorption_check(const ScaleSeries& series, double T) {
  const auto& recs = series.records;
  if (recs.size() < 2) throw InvalidArgument("absorption_check: need at least two scales");
  const int n = series.dimension;
  const std::size_t steps = series.steps_per_halving();

  AbsorptionReport rep;
  rep.T = T;
  rep.l = std::numbers::ln2;
  std::size_t start = recs.size();
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].t >= T - 1e-12) {
      start = i;
      break;
    }
  }
  if (start >= recs.size())
    throw InvalidArgument("absorption_check: window start lies beyond the series");
  rep.start_index = start;

  std::vector<double> f0(recs.size()), mass(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    f0[i] = recs[i].moments.annulus_mass[0];
    mass[i] = recs[i].moments.mass2;
  }
  for (std::size_t i = start; i < recs.size(); ++i) {
    rep.eta = std::max(rep.eta, recs[i].eps);
    rep.mu = std::max(rep.mu, f0[i]);
  }

  const double x = std::pow(2.0, -(n + 2));
  rep.S1 = x / ((1.0 - x) * (1.0 - x));
  rep.S2 = x * (1.0 + x) / ((1.0 - x) * (1.0 - x) * (1.0 - x));
  rep.Mn = sphere_area(n) / (n + 2);
  rep.k_max_used = series.k_max;

  const std::size_t span_needed = static_cast<std::size_t>(series.k_max) * steps;
  if (recs.size() - 1 >= span_needed) {
    const std::size_t v_end = recs.size() - 1 - span_needed;
    if (v_end > start) {
      rep.volterra_checked = true;
      rep.S_end = recs[v_end].t;
      rep.V.resize(v_end - start + 1);
      for (std::size_t i = start; i <= v_end; ++i) {
        double v = 0.0;
        for (int k = 1; k <= series.k_max; ++k) {
          const std::size_t j = i + static_cast<std::size_t>(k) * steps;
          v += std::pow(2.0, -static_cast<double>(k * (n + 2))) * f0[j] *
               trapezoid(series.t, mass, i, j);
        }
        rep.V[i - start] = v;
      }
      const double lhs = trapezoid(std::span<const double>(series.t).subspan(start, v_end - start + 1),
                                   std::vector<double>(rep.V), 0, rep.V.size() - 1);
      const double int_f = trapezoid(series.t, mass, start, v_end);
      rep.volterra_lhs = lhs;
      rep.volterra_rhs = rep.mu * (rep.l * rep.S1 * int_f + rep.Mn * rep.l * rep.l * rep.S2);
      rep.volterra_margin = rep.volterra_rhs - rep.volterra_lhs;
    }
  }

  // Truncation of the dyadic sum beyond k_max, per scale:
  // sum_{k > K} k x^k = x^{K+1} ((K+1) - K x) / (1-x)^2.
  const int K = series.k_max;
  const double tail_sum =
      std::pow(x, K + 1) * ((K + 1) - K * x) / ((1.0 - x) * (1.0 - x));
  rep.V_tail_bound = rep.mu * rep.Mn * rep.l * tail_sum;

  if (series.mode == FieldMode::solution) {
    rep.i0_checked = true;
    rep.i0_margin.resize(recs.size() - start);
    rep.i0_min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = start; i < recs.size(); ++i) {
      const double margin = 2.0 * recs[i].eps * f0[i] - std::abs(recs[i].integrals.I0);
      rep.i0_margin[i - start] = margin;
      rep.i0_min_margin = std::min(rep.i0_min_margin, margin);
    }
  }
  return rep;
}

double taylor_remainder(const SolutionField& field, double t, const TraceFreeSym& coeff,
                        const SphereQuadrature& quad) {
  const int n = field.dimension();
  if (coeff.dim() != n || quad.dimension() != n)
    throw InvalidArgument("taylor_remainder: dimension mismatch");
  const QuadraticProfile profile(coeff);
  const double stretch = std::exp(2.0 * t);
  const double pullback = std::exp(-t);
  Vec y(static_cast<std::size_t>(n));
  double sup = 0.0;
  for (std::size_t q = 0; q < quad.size(); ++q) {
    const auto node = quad.node(q);
    for (int k = 0; k < n; ++k) y[static_cast<std::size_t>(k)] = pullback * node[static_cast<std::size_t>(k)];
    sup = std::max(sup, std::abs(stretch * field.value(y) - profile.value(node)));
  }
  return sup;
}

DissipationReport convergence_report(const ScaleSeries& series, double T,
                                     const SolutionField& field, const SeriesOptions& opt) {
  const AbsorptionReport ab = absorption_check(series, T);
  const auto& recs = series.records;
  const int n = series.dimension;
  const std::size_t start = ab.start_index;
  const std::size_t last = recs.size() - 1;

  DissipationReport rep;
  rep.dimension = n;
  rep.mode = series.mode;
  rep.t_start = series.t.front();
  rep.t_end = series.t.back();
  rep.scale_count = recs.size();
  rep.T = recs[start].t;

  std::vector<double> mass(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) mass[i] = recs[i].moments.mass2;
  rep.integral_F = trapezoid(series.t, mass, start, last);

  // Tail beyond the window: log-linear fit on the last quarter of the scales.
  const std::size_t window = last - start + 1;
  const std::size_t fit_begin = start + (3 * window) / 4;
  std::vector<double> ft, fv;
  for (std::size_t i = fit_begin; i <= last; ++i) {
    if (mass[i] > 1e-300) {
      ft.push_back(series.t[i]);
      fv.push_back(std::log(mass[i]));
    }
  }
  if (mass[last] <= 1e-300) {
    rep.tail_estimate = 0.0;
    rep.tail_reliable = true;
    rep.notes.push_back("moment mass vanished inside the window; no tail correction needed");
  } else if (ft.size() >= 3) {
    double st = 0.0, sv = 0.0, stt = 0.0, stv = 0.0;
    for (std::size_t i = 0; i < ft.size(); ++i) {
      st += ft[i];
      sv += fv[i];
      stt += ft[i] * ft[i];
      stv += ft[i] * fv[i];
    }
    const double m = static_cast<double>(ft.size());
    const double denom = m * stt - st * st;
    const double slope = denom > 0.0 ? (m * stv - st * sv) / denom : 0.0;
    rep.tail_slope = slope;
    if (slope < -1e-9) {
      rep.tail_estimate = mass[last] / (-slope);
      rep.tail_reliable = true;
    } else {
      rep.tail_estimate = 0.0;
      rep.tail_reliable = false;
      rep.notes.push_back("tail fit slope is nonnegative; window end treated as a hard cutoff");
    }
  } else {
    rep.tail_estimate = 0.0;
    rep.tail_reliable = false;
    rep.notes.push_back("too few positive moment samples for a tail fit");
  }
  const double total = rep.integral_F + rep.tail_estimate;
  rep.tail_fraction = total > 0.0 ? rep.tail_estimate / total : 0.0;

  rep.total_variation = 0.0;
  for (std::size_t i = start; i < last; ++i)
    rep.total_variation += (recs[i + 1].coeff - recs[i].coeff).frob_norm();

  const HarmonicBasis basis(n);
  rep.b_infinity = basis.coordinates(recs[last].coeff);
  rep.b_uncertainty = kappa(n) * rep.tail_estimate;
  rep.eta = ab.eta;
  rep.mu = ab.mu;
  rep.taylor_sup = taylor_remainder(field, series.t[last], recs[last].coeff, opt.make_quadrature(n));

  rep.max_trace_error = 0.0;
  rep.min_derivative_margin = std::numeric_limits<double>::infinity();
  rep.max_partition_error = 0.0;
  std::size_t fallback_scales = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& md = recs[i].moments;
    rep.max_trace_error = std::max(rep.max_trace_error, std::abs(md.second_moment.trace() - md.mass2));
    rep.min_derivative_margin = std::min(
        rep.min_derivative_margin,
        kappa(n) * (md.mass2 - trace_free_part(md.second_moment).frob_norm()));
    double partition = md.annulus_tail;
    for (const double fk : md.annulus_mass) partition += fk;
    rep.max_partition_error = std::max(rep.max_partition_error, std::abs(md.mass2 - partition));
    if (md.fallback) ++fallback_scales;
  }

  rep.i0_checked = ab.i0_checked;
  rep.i0_min_margin = ab.i0_min_margin;
  rep.volterra_checked = ab.volterra_checked;
  rep.volterra_margin = ab.volterra_margin;
  if (!ab.volterra_checked)
    rep.notes.push_back("window too short for the dyadic majorant integral");
  if (fallback_scales > 0)
    rep.notes.push_back("moment sampling fallback engaged at " + std::to_string(fallback_scales) +
                        " scales");
  if (opt.integration.kind == IntegrationSpec::Kind::sampled)
    rep.notes.push_back("volume integrals evaluated by fixed-seed sampling on request");
  return rep;
}

}  // namespace blowup
