#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "blowup/linalg.hpp"

namespace blowup {

// Closed-form constants of the unit sphere / ball in R^n (n >= 2).
double sphere_area(int n);          // |S^{n-1}|
double ball_volume(int n);          // |B_1|
double gram_constant(int n);        // |S^{n-1}| / (2 n (n+2))
double kappa(int n);                // n (n+2) / |S^{n-1}|
double second_moment_total(int n);  // integral of |x|^2 over B_1

// Surface moment of four coordinates over S^{n-1}; indices are 0-based.
double fourth_moment(int i, int j, int k, int l, int n);

// q(x) = |x|^2/(2n) + x.Bx/2 for a trace-free symmetric B.
// Its Laplacian is 1 and its gradient is (I/n + B) x.
class QuadraticProfile {
 public:
  explicit QuadraticProfile(TraceFreeSym coeff);

  int dim() const { return coeff_.dim(); }
  const TraceFreeSym& coeff() const { return coeff_; }

  double isotropic_part(std::span<const double> x) const;  // |x|^2/(2n)
  double harmonic_part(std::span<const double> x) const;   // x.Bx/2
  double value(std::span<const double> x) const;
  Vec gradient(std::span<const double> x) const;
  SymMat hessian() const;  // A = I/n + B

 private:
  TraceFreeSym coeff_;
};

// Exact surface integral of psi_B psi_C over S^{n-1}: gram_constant(n) * B:C.
double gram_pair(const TraceFreeSym& b, const TraceFreeSym& c);

// Quadrature nodes and weights on S^{n-1}.
//   n = 2: trapezoid on the circle (spectrally exact for trig polynomials).
//   n = 3: Gauss-Legendre in the polar cosine x trapezoid in azimuth.
//   n >= 4: fixed low-discrepancy point set with equal weights; order() is 0
//           and integrals carry ~K^{-1/2}-style statistical accuracy.
class SphereQuadrature {
 public:
  static SphereQuadrature circle(int node_count = 64);
  static SphereQuadrature sphere_product(int polar = 16, int azimuth = 32);
  static SphereQuadrature quasi_random(int dim, int count = 4096);
  static SphereQuadrature standard(int dim);

  int dimension() const { return dim_; }
  int order() const { return order_; }  // highest polynomial degree integrated exactly
  std::size_t size() const { return weights_.size(); }
  std::span<const double> node(std::size_t i) const {
    return {nodes_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  double weight(std::size_t i) const { return weights_[i]; }

  double integrate(const std::function<double(std::span<const double>)>& f) const;

 private:
  SphereQuadrature(int dim, int order) : dim_(dim), order_(order) {}
  int dim_;
  int order_;
  std::vector<double> nodes_;    // size() * dim, row-major
  std::vector<double> weights_;  // sums to |S^{n-1}| (exactly for n = 2, 3)
};

// Frobenius-orthonormal basis of trace-free symmetric matrices, enumerated
// deterministically: normalized off-diagonal pairs (i < j, lexicographic),
// then diagonal combinations orthonormalized in index order.
class HarmonicBasis {
 public:
  explicit HarmonicBasis(int n);

  int dimension() const { return n_; }
  int size() const { return static_cast<int>(elements_.size()); }  // n(n+1)/2 - 1
  const TraceFreeSym& element(int j) const;
  double gram_const() const { return gram_const_; }

  TraceFreeSym combine(std::span<const double> coords) const;
  std::vector<double> coordinates(const TraceFreeSym& b) const;

 private:
  int n_;
  double gram_const_;
  std::vector<TraceFreeSym> elements_;
};

// L^2(S^{n-1}) projection of sphere samples onto the quadratic harmonics.
// moments[i] is the quadrature integral of (v - |x|^2/(2n)) psi_{E_i}.
struct Projection {
  TraceFreeSym coeff;
  std::vector<double> moments;
};

Projection project_samples(std::span<const double> samples, const HarmonicBasis& basis,
                           const SphereQuadrature& quad);
TraceFreeSym project(std::span<const double> samples, const HarmonicBasis& basis,
                     const SphereQuadrature& quad);

// Gauss-Legendre rule on [-1, 1], used for the n = 3 sphere product rule and
// exposed for oracle integrals in tests.
void gauss_legendre(int count, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace blowup
