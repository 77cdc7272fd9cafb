#include "blowup/harmonics.hpp"

#include <cmath>
#include <numbers>

#include "blowup/errors.hpp"

namespace blowup {

namespace {

constexpr double kPi = std::numbers::pi;

void require_dim(int n) {
  if (n < 2) throw InvalidArgument("sphere constants need dimension >= 2");
}

// First primes, enough Halton bases for any dimension used here.
constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

double radical_inverse(std::uint64_t i, int base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

double sphere_area(int n) {
  require_dim(n);
  return 2.0 * std::pow(kPi, 0.5 * n) / std::tgamma(0.5 * n);
}

double ball_volume(int n) { return sphere_area(n) / n; }

double gram_constant(int n) { return sphere_area(n) / (2.0 * n * (n + 2)); }

double kappa(int n) { return n * (n + 2) / sphere_area(n); }

double second_moment_total(int n) { return sphere_area(n) / (n + 2); }

double fourth_moment(int i, int j, int k, int l, int n) {
  require_dim(n);
  for (int idx : {i, j, k, l})
    if (idx < 0 || idx >= n) throw InvalidArgument("fourth_moment: index out of range");
  auto d = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  return sphere_area(n) / (n * (n + 2)) * (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k));
}

// ---------------------------------------------------------------------------
// QuadraticProfile
// ---------------------------------------------------------------------------

QuadraticProfile::QuadraticProfile(TraceFreeSym coeff) : coeff_(std::move(coeff)) {
  require_dim(coeff_.dim());
}

double QuadraticProfile::isotropic_part(std::span<const double> x) const {
  return dot(x, x) / (2.0 * dim());
}

double QuadraticProfile::harmonic_part(std::span<const double> x) const {
  return 0.5 * coeff_.quad_form(x);
}

double QuadraticProfile::value(std::span<const double> x) const {
  return isotropic_part(x) + harmonic_part(x);
}

Vec QuadraticProfile::gradient(std::span<const double> x) const {
  Vec g = coeff_.apply(x);
  const double inv_n = 1.0 / dim();
  for (int i = 0; i < dim(); ++i) g[i] += inv_n * x[i];
  return g;
}

SymMat QuadraticProfile::hessian() const {
  SymMat a = coeff_.matrix();
  const double inv_n = 1.0 / dim();
  for (int i = 0; i < dim(); ++i) a.add(i, i, inv_n);
  return a;
}

double gram_pair(const TraceFreeSym& b, const TraceFreeSym& c) {
  if (b.dim() != c.dim()) throw InvalidArgument("gram_pair: dimension mismatch");
  return gram_constant(b.dim()) * b.frob_dot(c);
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

void gauss_legendre(int count, std::vector<double>& nodes, std::vector<double>& weights) {
  if (count < 1) throw InvalidArgument("gauss_legendre: count must be >= 1");
  nodes.assign(count, 0.0);
  weights.assign(count, 0.0);
  const int half = (count + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (count + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      // Legendre recurrence for P_count(x) and its derivative.
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= count; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = count * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[count - 1 - i] = x;
    const double w = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[i] = w;
    weights[count - 1 - i] = w;
  }
}

SphereQuadrature SphereQuadrature::circle(int node_count) {
  if (node_count < 8) throw InvalidArgument("circle quadrature: need at least 8 nodes");
  SphereQuadrature q(2, node_count - 1);
  q.nodes_.resize(2 * static_cast<std::size_t>(node_count));
  q.weights_.assign(node_count, 2.0 * kPi / node_count);
  for (int k = 0; k < node_count; ++k) {
    const double th = 2.0 * kPi * k / node_count;
    q.nodes_[2 * static_cast<std::size_t>(k)] = std::cos(th);
    q.nodes_[2 * static_cast<std::size_t>(k) + 1] = std::sin(th);
  }
  return q;
}

SphereQuadrature SphereQuadrature::sphere_product(int polar, int azimuth) {
  if (polar < 4 || azimuth < 8) throw InvalidArgument("sphere quadrature: rule too small");
  SphereQuadrature q(3, std::min(2 * polar - 1, azimuth - 1));
  std::vector<double> mu, wmu;
  gauss_legendre(polar, mu, wmu);
  q.nodes_.reserve(3 * static_cast<std::size_t>(polar) * azimuth);
  q.weights_.reserve(static_cast<std::size_t>(polar) * azimuth);
  for (int i = 0; i < polar; ++i) {
    const double s = std::sqrt(std::max(0.0, 1.0 - mu[i] * mu[i]));
    for (int j = 0; j < azimuth; ++j) {
      const double ph = 2.0 * kPi * j / azimuth;
      q.nodes_.push_back(s * std::cos(ph));
      q.nodes_.push_back(s * std::sin(ph));
      q.nodes_.push_back(mu[i]);
      q.weights_.push_back(wmu[i] * 2.0 * kPi / azimuth);
    }
  }
  return q;
}

SphereQuadrature SphereQuadrature::quasi_random(int dim, int count) {
  if (dim < 2) throw InvalidArgument("quasi_random: dimension must be >= 2");
  if (count < 16) throw InvalidArgument("quasi_random: need at least 16 points");
  const int pairs = (dim + 1) / 2;
  if (2 * pairs > static_cast<int>(std::size(kPrimes)))
    throw InvalidArgument("quasi_random: dimension too large for the Halton bases");

  // Halton points mapped through Box-Muller, then normalized to the sphere.
  // Equal weights; order 0 marks the statistical (non-exact) rule.
  SphereQuadrature q(dim, 0);
  q.nodes_.resize(static_cast<std::size_t>(count) * dim);
  q.weights_.assign(count, sphere_area(dim) / count);
  for (int k = 0; k < count; ++k) {
    const std::uint64_t idx = static_cast<std::uint64_t>(k) + 1;
    Vec z(2 * pairs);
    for (int p = 0; p < pairs; ++p) {
      const double u1 = radical_inverse(idx, kPrimes[2 * p]);
      const double u2 = radical_inverse(idx, kPrimes[2 * p + 1]);
      const double r = std::sqrt(-2.0 * std::log(u1 > 0 ? u1 : 1e-17));
      z[2 * p] = r * std::cos(2.0 * kPi * u2);
      z[2 * p + 1] = r * std::sin(2.0 * kPi * u2);
    }
    double nz = 0.0;
    for (int d = 0; d < dim; ++d) nz += z[d] * z[d];
    nz = std::sqrt(nz);
    if (nz < 1e-12) nz = 1.0;  // unreachable for the Halton stream, kept as a guard
    for (int d = 0; d < dim; ++d) q.nodes_[static_cast<std::size_t>(k) * dim + d] = z[d] / nz;
  }
  return q;
}

SphereQuadrature SphereQuadrature::standard(int dim) {
  require_dim(dim);
  if (dim == 2) return circle();
  if (dim == 3) return sphere_product();
  return quasi_random(dim);
}

double SphereQuadrature::integrate(const std::function<double(std::span<const double>)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += weight(i) * f(node(i));
  return s;
}

// ---------------------------------------------------------------------------
// Basis
// ---------------------------------------------------------------------------

HarmonicBasis::HarmonicBasis(int n) : n_(n), gram_const_(gram_constant(n)) {
  require_dim(n);
  // Off-diagonal pairs, already orthonormal in the Frobenius inner product.
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      SymMat e(n);
      e.set(i, j, 1.0 / std::sqrt(2.0));
      elements_.push_back(TraceFreeSym::from(e));
    }
  // Diagonal trace-free directions, Gram-Schmidt in index order.
  for (int k = 0; k + 1 < n; ++k) {
    SymMat e(n);
    e.set(k, k, 1.0);
    TraceFreeSym cand = TraceFreeSym::from(e);
    for (const auto& prev : elements_) cand.axpy(-cand.frob_dot(prev), prev);
    const double nn = cand.frob_norm();
    if (nn < 1e-14) throw InternalError("basis construction degenerated");
    elements_.push_back(cand.scaled(1.0 / nn));
  }
}

const TraceFreeSym& HarmonicBasis::element(int j) const {
  if (j < 0 || j >= size()) throw InvalidArgument("basis element index out of range");
  return elements_[static_cast<std::size_t>(j)];
}

TraceFreeSym HarmonicBasis::combine(std::span<const double> coords) const {
  if (static_cast<int>(coords.size()) != size())
    throw InvalidArgument("combine: coordinate count mismatch");
  TraceFreeSym b(n_);
  for (int j = 0; j < size(); ++j) b.axpy(coords[j], elements_[static_cast<std::size_t>(j)]);
  return b;
}

std::vector<double> HarmonicBasis::coordinates(const TraceFreeSym& b) const {
  if (b.dim() != n_) throw InvalidArgument("coordinates: dimension mismatch");
  std::vector<double> c(size());
  for (int j = 0; j < size(); ++j) c[static_cast<std::size_t>(j)] = b.frob_dot(elements_[static_cast<std::size_t>(j)]);
  return c;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

namespace {

// Cholesky solve for the small SPD Gram system.
std::vector<double> spd_solve(std::vector<double> a, std::vector<double> rhs, int n) {
  for (int j = 0; j < n; ++j) {
    double d = a[static_cast<std::size_t>(j) * n + j];
    for (int k = 0; k < j; ++k) d -= a[static_cast<std::size_t>(j) * n + k] * a[static_cast<std::size_t>(j) * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) throw InternalError("projection: singular Gram matrix");
    d = std::sqrt(d);
    a[static_cast<std::size_t>(j) * n + j] = d;
    for (int i = j + 1; i < n; ++i) {
      double s = a[static_cast<std::size_t>(i) * n + j];
      for (int k = 0; k < j; ++k) s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
      a[static_cast<std::size_t>(i) * n + j] = s / d;
    }
  }
  for (int i = 0; i < n; ++i) {
    double s = rhs[static_cast<std::size_t>(i)];
    for (int k = 0; k < i; ++k) s -= a[static_cast<std::size_t>(i) * n + k] * rhs[static_cast<std::size_t>(k)];
    rhs[static_cast<std::size_t>(i)] = s / a[static_cast<std::size_t>(i) * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = rhs[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < n; ++k) s -= a[static_cast<std::size_t>(k) * n + i] * rhs[static_cast<std::size_t>(k)];
    rhs[static_cast<std::size_t>(i)] = s / a[static_cast<std::size_t>(i) * n + i];
  }
  return rhs;
}

}  // namespace

Projection project_samples(std::span<const double> samples, const HarmonicBasis& basis,
                           const SphereQuadrature& quad) {
  if (basis.dimension() != quad.dimension())
    throw InvalidArgument("project: basis and quadrature dimension mismatch");
  if (samples.size() != quad.size()) throw InvalidArgument("project: sample count mismatch");
  if (quad.order() != 0 && quad.order() < 4)
    throw InvalidArgument("project: quadrature must be exact to degree >= 4");
  for (double v : samples)
    if (!std::isfinite(v)) throw DataError("project: non-finite sample");

  const int n = basis.dimension();
  const int nb = basis.size();
  const std::size_t nq = quad.size();

  // psi values per basis element at each node.
  std::vector<double> psi(static_cast<std::size_t>(nb) * nq);
  for (int j = 0; j < nb; ++j) {
    const TraceFreeSym& e = basis.element(j);
    for (std::size_t q = 0; q < nq; ++q)
      psi[static_cast<std::size_t>(j) * nq + q] = 0.5 * e.quad_form(quad.node(q));
  }

  std::vector<double> gram(static_cast<std::size_t>(nb) * nb, 0.0);
  for (int i = 0; i < nb; ++i)
    for (int j = i; j < nb; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < nq; ++q)
        s += quad.weight(q) * psi[static_cast<std::size_t>(i) * nq + q] * psi[static_cast<std::size_t>(j) * nq + q];
      gram[static_cast<std::size_t>(i) * nb + j] = s;
      gram[static_cast<std::size_t>(j) * nb + i] = s;
    }

  const double p0 = 1.0 / (2.0 * n);  // |x|^2/(2n) on the unit sphere
  std::vector<double> m(nb, 0.0);
  for (int j = 0; j < nb; ++j) {
    double s = 0.0;
    for (std::size_t q = 0; q < nq; ++q)
      s += quad.weight(q) * (samples[q] - p0) * psi[static_cast<std::size_t>(j) * nq + q];
    m[static_cast<std::size_t>(j)] = s;
  }

  Projection out{TraceFreeSym(n), m};
  const std::vector<double> coords = spd_solve(std::move(gram), m, nb);
  out.coeff = basis.combine(coords);
  return out;
}

TraceFreeSym project(std::span<const double> samples, const HarmonicBasis& basis,
                     const SphereQuadrature& quad) {
  return project_samples(samples, basis, quad).coeff;
}

}  // namespace blowup
