#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace blowup {

using Vec = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

// Dense symmetric matrix, packed upper triangle (row-wise, i <= j).
// Symmetry is exact by construction: there is one stored entry per pair.
class SymMat {
 public:
  explicit SymMat(int n);
  static SymMat identity(int n);

  int dim() const { return n_; }
  double operator()(int i, int j) const { return a_[index(i, j)]; }
  void set(int i, int j, double v) { a_[index(i, j)] = v; }
  void add(int i, int j, double v) { a_[index(i, j)] += v; }

  double trace() const;
  double frob_dot(const SymMat& other) const;
  double frob_norm() const;

  Vec apply(std::span<const double> x) const;       // A x
  double quad_form(std::span<const double> x) const; // x . A x

  SymMat& axpy(double a, const SymMat& other);  // *this += a * other
  SymMat scaled(double a) const;
  SymMat& operator*=(double a);

  // Eigenvalue range by cyclic Jacobi; fine for the small dimensions used here.
  std::pair<double, double> eigen_range() const;
  double spectral_norm() const;

  const std::vector<double>& packed() const { return a_; }
  static SymMat from_packed(int n, std::vector<double> upper);

 private:
  std::size_t index(int i, int j) const;
  int n_;
  std::vector<double> a_;
};

// Symmetric with zero trace. Construction subtracts (trace/n) * I, so the
// invariant survives any arithmetic done through this type.
class TraceFreeSym {
 public:
  explicit TraceFreeSym(int n) : m_(n) {}
  static TraceFreeSym from(const SymMat& m);

  int dim() const { return m_.dim(); }
  double operator()(int i, int j) const { return m_(i, j); }
  const SymMat& matrix() const { return m_; }

  double frob_dot(const TraceFreeSym& other) const { return m_.frob_dot(other.m_); }
  double frob_dot(const SymMat& other) const { return m_.frob_dot(other); }
  double frob_norm() const { return m_.frob_norm(); }
  double spectral_norm() const { return m_.spectral_norm(); }

  Vec apply(std::span<const double> x) const { return m_.apply(x); }
  double quad_form(std::span<const double> x) const { return m_.quad_form(x); }

  TraceFreeSym& axpy(double a, const TraceFreeSym& other);
  TraceFreeSym scaled(double a) const;

  // Packed upper triangle, the serialization order used in configs.
  std::vector<double> upper() const { return m_.packed(); }

 private:
  SymMat m_;
};

TraceFreeSym trace_free_part(const SymMat& m);
TraceFreeSym operator-(const TraceFreeSym& a, const TraceFreeSym& b);

}  // namespace blowup
