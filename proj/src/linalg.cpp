#include "blowup/linalg.hpp"

#include <cmath>
#include <cstdlib>

#include "blowup/errors.hpp"

namespace blowup {

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

SymMat::SymMat(int n) : n_(n) {
  if (n < 1) throw InvalidArgument("SymMat: dimension must be >= 1");
  a_.assign(static_cast<std::size_t>(n) * (n + 1) / 2, 0.0);
}

SymMat SymMat::identity(int n) {
  SymMat m(n);
  for (int i = 0; i < n; ++i) m.set(i, i, 1.0);
  return m;
}

std::size_t SymMat::index(int i, int j) const {
  if (i < 0 || j < 0 || i >= n_ || j >= n_) throw InvalidArgument("SymMat: index out of range");
  if (i > j) std::swap(i, j);
  return static_cast<std::size_t>(i) * n_ - static_cast<std::size_t>(i) * (i - 1) / 2 +
         static_cast<std::size_t>(j - i);
}

double SymMat::trace() const {
  double t = 0.0;
  for (int i = 0; i < n_; ++i) t += (*this)(i, i);
  return t;
}

double SymMat::frob_dot(const SymMat& other) const {
  if (other.n_ != n_) throw InvalidArgument("SymMat: dimension mismatch");
  double s = 0.0;
  for (int i = 0; i < n_; ++i)
    for (int j = i; j < n_; ++j) {
      const double w = (i == j) ? 1.0 : 2.0;  // off-diagonal entries appear twice
      s += w * (*this)(i, j) * other(i, j);
    }
  return s;
}

double SymMat::frob_norm() const { return std::sqrt(frob_dot(*this)); }

Vec SymMat::apply(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != n_) throw InvalidArgument("SymMat: vector length mismatch");
  Vec y(n_, 0.0);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j) y[i] += (*this)(i, j) * x[j];
  return y;
}

double SymMat::quad_form(std::span<const double> x) const {
  const Vec y = apply(x);
  double s = 0.0;
  for (int i = 0; i < n_; ++i) s += x[i] * y[i];
  return s;
}

SymMat& SymMat::axpy(double a, const SymMat& other) {
  if (other.n_ != n_) throw InvalidArgument("SymMat: dimension mismatch");
  for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += a * other.a_[k];
  return *this;
}

SymMat SymMat::scaled(double a) const {
  SymMat r = *this;
  r *= a;
  return r;
}

SymMat& SymMat::operator*=(double a) {
  for (double& v : a_) v *= a;
  return *this;
}

SymMat SymMat::from_packed(int n, std::vector<double> upper) {
  SymMat m(n);
  if (upper.size() != m.a_.size()) throw InvalidArgument("SymMat: packed length mismatch");
  m.a_ = std::move(upper);
  return m;
}

std::pair<double, double> SymMat::eigen_range() const {
  // Cyclic Jacobi on a dense copy; dimensions here are tiny (<= ~10).
  const int n = n_;
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a[static_cast<std::size_t>(i) * n + j] = (*this)(i, j);

  auto off = [&]() {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j) s += a[static_cast<std::size_t>(i) * n + j] * a[static_cast<std::size_t>(i) * n + j];
    return s;
  };

  for (int sweep = 0; sweep < 64 && off() > 1e-30; ++sweep) {
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<std::size_t>(p) * n + q];
        if (apq == 0.0) continue;
        const double app = a[static_cast<std::size_t>(p) * n + p];
        const double aqq = a[static_cast<std::size_t>(q) * n + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[static_cast<std::size_t>(k) * n + p];
          const double akq = a[static_cast<std::size_t>(k) * n + q];
          a[static_cast<std::size_t>(k) * n + p] = c * akp - s * akq;
          a[static_cast<std::size_t>(k) * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[static_cast<std::size_t>(p) * n + k];
          const double aqk = a[static_cast<std::size_t>(q) * n + k];
          a[static_cast<std::size_t>(p) * n + k] = c * apk - s * aqk;
          a[static_cast<std::size_t>(q) * n + k] = s * apk + c * aqk;
        }
      }
  }
  double lo = a[0], hi = a[0];
  for (int i = 1; i < n; ++i) {
    const double d = a[static_cast<std::size_t>(i) * n + i];
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

double SymMat::spectral_norm() const {
  auto [lo, hi] = eigen_range();
  return std::max(std::abs(lo), std::abs(hi));
}

TraceFreeSym TraceFreeSym::from(const SymMat& m) {
  TraceFreeSym r(m.dim());
  r.m_ = m;
  const double shift = m.trace() / m.dim();
  for (int i = 0; i < m.dim(); ++i) r.m_.add(i, i, -shift);
  return r;
}

TraceFreeSym& TraceFreeSym::axpy(double a, const TraceFreeSym& other) {
  m_.axpy(a, other.m_);
  *this = TraceFreeSym::from(m_);  // re-zero the trace against drift
  return *this;
}

TraceFreeSym TraceFreeSym::scaled(double a) const { return TraceFreeSym::from(m_.scaled(a)); }

TraceFreeSym trace_free_part(const SymMat& m) { return TraceFreeSym::from(m); }

TraceFreeSym operator-(const TraceFreeSym& a, const TraceFreeSym& b) {
  TraceFreeSym r = a;
  r.axpy(-1.0, b);
  return r;
}

}  // namespace blowup
