#include "blowup/solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "blowup/errors.hpp"

namespace blowup {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int checked_cells(int dimension, int cells) {
  if (dimension != 2 && dimension != 3)
    throw InvalidArgument("grid: only dimensions 2 and 3 are supported");
  if (cells < 8 || cells % 2 != 0) throw InvalidArgument("grid: cells must be even and >= 8");
  if (dimension == 3 && cells > 128)
    throw InvalidArgument("grid: 3-d grids are capped at 128 cells per axis");
  if (dimension == 2 && cells > 4096)
    throw InvalidArgument("grid: 2-d grids are capped at 4096 cells per axis");
  return cells;
}

}  // namespace

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

Grid Grid::make(int dimension, int cells) {
  Grid g;
  g.dim_ = dimension;
  g.cells_ = checked_cells(dimension, cells);
  g.h_ = 2.0 / cells;
  g.per_axis_ = cells + 1;
  g.node_count_ = 1;
  for (int d = 0; d < dimension; ++d) g.node_count_ *= static_cast<std::size_t>(g.per_axis_);
  g.cls_.assign(g.node_count_, exterior);
  g.unknown_of_.assign(g.node_count_, -1);

  std::array<int, 3> idx{0, 0, 0};
  for (std::size_t p = 0; p < g.node_count_; ++p) {
    g.indices_of(p, std::span<int>(idx.data(), static_cast<std::size_t>(dimension)));
    double r2 = 0.0;
    for (int d = 0; d < dimension; ++d) {
      const double x = idx[static_cast<std::size_t>(d)] * g.h_ - 1.0;
      r2 += x * x;
    }
    if (r2 < 1.0) g.cls_[p] = interior;
  }

  // Every non-interior corner of a cell meeting the ball becomes band.
  const int nc = cells;
  std::array<int, 3> c{0, 0, 0};
  const std::size_t cell_total = [&] {
    std::size_t t = 1;
    for (int d = 0; d < dimension; ++d) t *= static_cast<std::size_t>(nc);
    return t;
  }();
  for (std::size_t cc = 0; cc < cell_total; ++cc) {
    std::size_t rem = cc;
    for (int d = dimension - 1; d >= 0; --d) {
      c[static_cast<std::size_t>(d)] = static_cast<int>(rem % static_cast<std::size_t>(nc));
      rem /= static_cast<std::size_t>(nc);
    }
    double r2min = 0.0;
    for (int d = 0; d < dimension; ++d) {
      const double a = c[static_cast<std::size_t>(d)] * g.h_ - 1.0;
      const double b = a + g.h_;
      if (a <= 0.0 && 0.0 <= b) continue;
      const double m = std::min(std::abs(a), std::abs(b));
      r2min += m * m;
    }
    if (r2min >= 1.0) continue;
    const int corners = 1 << dimension;
    for (int k = 0; k < corners; ++k) {
      std::array<int, 3> ci = c;
      for (int d = 0; d < dimension; ++d)
        if (k & (1 << d)) ++ci[static_cast<std::size_t>(d)];
      const std::size_t p = g.node_of(std::span<const int>(ci.data(), static_cast<std::size_t>(dimension)));
      if (g.cls_[p] == exterior) g.cls_[p] = band;
    }
  }

  for (std::size_t p = 0; p < g.node_count_; ++p)
    if (g.cls_[p] == interior) {
      g.unknown_of_[p] = static_cast<std::ptrdiff_t>(g.unknowns_.size());
      g.unknowns_.push_back(p);
    }
  return g;
}

Vec Grid::coords(std::size_t node) const {
  std::array<int, 3> idx{0, 0, 0};
  indices_of(node, std::span<int>(idx.data(), static_cast<std::size_t>(dim_)));
  Vec x(static_cast<std::size_t>(dim_));
  for (int d = 0; d < dim_; ++d) x[static_cast<std::size_t>(d)] = idx[static_cast<std::size_t>(d)] * h_ - 1.0;
  return x;
}

std::size_t Grid::node_of(std::span<const int> idx) const {
  std::size_t p = 0;
  for (int d = 0; d < dim_; ++d) {
    const int i = idx[static_cast<std::size_t>(d)];
    if (i < 0 || i >= per_axis_) throw InvalidArgument("grid: node index out of range");
    p = p * static_cast<std::size_t>(per_axis_) + static_cast<std::size_t>(i);
  }
  return p;
}

void Grid::indices_of(std::size_t node, std::span<int> idx) const {
  for (int d = dim_ - 1; d >= 0; --d) {
    idx[static_cast<std::size_t>(d)] = static_cast<int>(node % static_cast<std::size_t>(per_axis_));
    node /= static_cast<std::size_t>(per_axis_);
  }
}

std::size_t Grid::neighbor(std::size_t node, int axis, int step) const {
  std::size_t stride = 1;
  for (int d = dim_ - 1; d > axis; --d) stride *= static_cast<std::size_t>(per_axis_);
  return step > 0 ? node + stride : node - stride;
}

std::size_t Grid::nearest_node(std::span<const double> x) const {
  std::array<int, 3> idx{0, 0, 0};
  for (int d = 0; d < dim_; ++d) {
    const int i = static_cast<int>(std::lround((x[static_cast<std::size_t>(d)] + 1.0) / h_));
    idx[static_cast<std::size_t>(d)] = std::clamp(i, 0, per_axis_ - 1);
  }
  return node_of(std::span<const int>(idx.data(), static_cast<std::size_t>(dim_)));
}

// ---------------------------------------------------------------------------
// Boundary data
// ---------------------------------------------------------------------------

BoundaryFn on_sphere(BoundaryFn sphere_data) {
  return [fn = std::move(sphere_data)](std::span<const double> x) {
    const double r = norm(x);
    if (r < 1e-12) throw DomainError("on_sphere: cannot project the origin");
    Vec y(x.begin(), x.end());
    for (double& v : y) v /= r;
    return fn(y);
  };
}

BoundaryFn quadratic_boundary(const QuadraticProfile& profile) {
  return [profile](std::span<const double> x) { return profile.value(x); };
}

double radial_solution_value(int dimension, double rho, double r) {
  if (dimension < 2) throw InvalidArgument("radial solution: dimension must be >= 2");
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidArgument("radial solution: rho must be in (0,1)");
  if (r <= rho) return 0.0;
  const int n = dimension;
  if (n == 2) return 0.25 * (r * r - rho * rho) - 0.5 * rho * rho * std::log(r / rho);
  const double rn = std::pow(rho, n);
  return (r * r - rho * rho) / (2.0 * n) -
         rn / (n * (n - 2.0)) * (std::pow(rho, 2.0 - n) - std::pow(r, 2.0 - n));
}

BoundaryFn radial_solution_boundary(int dimension, double rho) {
  return [dimension, rho](std::span<const double> x) {
    return radial_solution_value(dimension, rho, norm(x));
  };
}

// ---------------------------------------------------------------------------
// Poisson solve (preconditioned conjugate gradients)
// ---------------------------------------------------------------------------

namespace {

// y = A x with A = -lap_h restricted to the unknowns (SPD).
// Pinned unknowns are Dirichlet-0 rows: identity on the diagonal, no coupling.
// Their entries stay exactly zero through CG, so the off-subspace asymmetry is
// never exercised and the effective operator is the symmetric principal block.
void apply_operator(const Grid& g, std::span<const std::uint8_t> is_pinned,
                    std::span<const double> x, std::span<double> y) {
  const int n = g.dimension();
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  const std::size_t m = g.unknown_count();
  for (std::size_t k = 0; k < m; ++k) {
    if (!is_pinned.empty() && is_pinned[k]) {
      y[k] = x[k];
      continue;
    }
    const std::size_t p = g.unknown_node(k);
    double acc = 2.0 * n * x[k];
    for (int d = 0; d < n; ++d)
      for (int s : {-1, 1}) {
        const std::size_t q = g.neighbor(p, d, s);
        const std::ptrdiff_t uq = g.unknown_index(q);
        if (uq >= 0) acc -= x[static_cast<std::size_t>(uq)];
      }
    y[k] = acc * inv_h2;
  }
}

}  // namespace

PoissonResult poisson_solve(const Grid& grid, std::span<const double> rhs,
                            const BoundaryFn& boundary, double tol, int max_iter,
                            const Vec* warm_start, std::span<const std::uint8_t> pinned) {
  if (rhs.size() != grid.node_count()) throw InvalidArgument("poisson_solve: rhs size mismatch");
  if (!pinned.empty() && pinned.size() != grid.node_count())
    throw InvalidArgument("poisson_solve: pinned size mismatch");
  const std::size_t m = grid.unknown_count();
  const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());

  std::vector<std::uint8_t> is_pinned;
  if (!pinned.empty()) {
    is_pinned.resize(m, 0);
    for (std::size_t k = 0; k < m; ++k) is_pinned[k] = pinned[grid.unknown_node(k)];
  }
  const auto row_pinned = [&](std::size_t k) { return !is_pinned.empty() && is_pinned[k]; };

  // Band data, evaluated once.
  Vec band_values(grid.node_count(), kNaN);
  for (std::size_t p = 0; p < grid.node_count(); ++p)
    if (grid.node_class(p) == Grid::band) band_values[p] = boundary(grid.coords(p));

  Vec b(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    if (row_pinned(k)) continue;
    const std::size_t p = grid.unknown_node(k);
    double acc = -rhs[p];
    for (int d = 0; d < grid.dimension(); ++d)
      for (int s : {-1, 1}) {
        const std::size_t q = grid.neighbor(p, d, s);
        if (grid.node_class(q) == Grid::band) acc += band_values[q] * inv_h2;
      }
    b[k] = acc;
  }

  PoissonResult out;
  Vec x(m, 0.0);
  if (warm_start) {
    if (warm_start->size() != grid.node_count())
      throw InvalidArgument("poisson_solve: warm start size mismatch");
    for (std::size_t k = 0; k < m; ++k) {
      const double v = (*warm_start)[grid.unknown_node(k)];
      x[k] = std::isfinite(v) && !row_pinned(k) ? v : 0.0;
    }
  }

  const double nb = norm(b);
  Vec r(m), z(m), p(m), ap(m);
  if (nb == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
  } else {
    apply_operator(grid, is_pinned, x, r);
    for (std::size_t k = 0; k < m; ++k) r[k] = b[k] - r[k];
    const double inv_diag = 1.0 / (2.0 * grid.dimension() * inv_h2);
    for (std::size_t k = 0; k < m; ++k) z[k] = r[k] * inv_diag;
    p = z;
    double rz = dot(r, z);
    double rel = norm(r) / nb;
    out.residual_history.push_back(rel);
    int it = 0;
    while (rel > tol) {
      if (it >= max_iter)
        throw SolverFailure("poisson_solve: conjugate gradients stalled at residual " +
                                std::to_string(rel),
                            out.residual_history);
      apply_operator(grid, is_pinned, p, ap);
      const double pap = dot(p, ap);
      if (!(pap > 0.0))
        throw SolverFailure("poisson_solve: operator lost positive definiteness",
                            out.residual_history);
      const double alpha = rz / pap;
      for (std::size_t k = 0; k < m; ++k) x[k] += alpha * p[k];
      for (std::size_t k = 0; k < m; ++k) r[k] -= alpha * ap[k];
      for (std::size_t k = 0; k < m; ++k) z[k] = r[k] * inv_diag;
      const double rz_next = dot(r, z);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t k = 0; k < m; ++k) p[k] = z[k] + beta * p[k];
      rel = norm(r) / nb;
      out.residual_history.push_back(rel);
      ++it;
    }
    out.iterations = it;
    out.final_residual = rel;
  }

  out.values.assign(grid.node_count(), kNaN);
  for (std::size_t pnode = 0; pnode < grid.node_count(); ++pnode)
    if (grid.node_class(pnode) == Grid::band) out.values[pnode] = band_values[pnode];
  for (std::size_t k = 0; k < m; ++k) out.values[grid.unknown_node(k)] = x[k];
  return out;
}

// ---------------------------------------------------------------------------
// Fixed point iteration on the inactive mask
// ---------------------------------------------------------------------------

namespace {

// Central differences at the unknowns (all stencil neighbors carry values).
void unknown_gradients(const Grid& g, const Vec& values, std::vector<Vec>& grad) {
  const double inv_2h = 0.5 / g.spacing();
  const std::size_t m = g.unknown_count();
  for (int d = 0; d < g.dimension(); ++d) grad[static_cast<std::size_t>(d)].assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t p = g.unknown_node(k);
    for (int d = 0; d < g.dimension(); ++d) {
      const double up = values[g.neighbor(p, d, +1)];
      const double um = values[g.neighbor(p, d, -1)];
      grad[static_cast<std::size_t>(d)][k] = (up - um) * inv_2h;
    }
  }
}

struct Flip {
  double violation;
  std::size_t node;
};

// Violations beyond this many thresholds mark a grossly misplaced rim.
constexpr double kStrongViolation = 4.0;

}  // namespace

GridSolution fixed_point_solve(const SolverConfig& config, const BoundaryFn& boundary) {
  const Grid grid = Grid::make(config.dimension, config.cells);
  if (!(config.threshold_factor > 0.0))
    throw ConfigError("solver: threshold_factor must be positive");
  if (!(config.damping > 0.0 && config.damping <= 1.0))
    throw ConfigError("solver: damping must be in (0, 1]");

  GridSolution sol;
  sol.grid = grid;
  sol.delta_h = config.threshold_factor * grid.spacing();
  sol.inactive.assign(grid.node_count(), 0);

  Vec rhs(grid.node_count(), 0.0);
  std::vector<Vec> grad(static_cast<std::size_t>(grid.dimension()));
  PoissonResult ps;
  std::vector<Flip> flips;

  std::vector<std::uint8_t> best_mask;
  Vec best_values;
  std::size_t best_mismatch = std::numeric_limits<std::size_t>::max();
  int best_outer = 0;
  PoissonResult best_ps;

  for (int outer = 0; outer <= config.max_outer; ++outer) {
    for (std::size_t k = 0; k < grid.unknown_count(); ++k) {
      const std::size_t p = grid.unknown_node(k);
      rhs[p] = sol.inactive[p] ? 0.0 : 1.0;
    }
    ps = poisson_solve(grid, rhs, boundary, config.cg_tol, config.cg_max_iter,
                       outer == 0 ? nullptr : &ps.values, sol.inactive);
    unknown_gradients(grid, ps.values, grad);

    // While the mask is empty the update also claims nodes the unconstrained
    // solve pushed negative. That region is connected (maximum principle), so
    // the mask grows as a blob instead of as scattered pins whose central
    // differences immediately flip them back. Afterwards the gradient
    // threshold alone governs.
    bool seeding = true;
    for (std::size_t k = 0; seeding && k < grid.unknown_count(); ++k)
      seeding = sol.inactive[grid.unknown_node(k)] == 0;

    flips.clear();
    for (std::size_t k = 0; k < grid.unknown_count(); ++k) {
      const std::size_t p = grid.unknown_node(k);
      double g2 = 0.0;
      for (int d = 0; d < grid.dimension(); ++d) {
        const double gd = grad[static_cast<std::size_t>(d)][k];
        g2 += gd * gd;
      }
      const double gm = std::sqrt(g2);
      double violation = std::abs(gm - sol.delta_h);
      bool want_inactive = gm <= sol.delta_h;
      if (seeding && ps.values[p] < 0.0) {
        want_inactive = true;
        // depth over h puts the value criterion on the gradient scale
        violation = std::max(violation, -ps.values[p] / grid.spacing());
      }
      if (want_inactive != (sol.inactive[p] != 0)) flips.push_back({violation, p});
    }

    sol.outer_iterations = outer + 1;
    if (flips.size() < best_mismatch) {
      best_mismatch = flips.size();
      best_mask = sol.inactive;
      best_values = ps.values;
      best_outer = outer + 1;
      best_ps = ps;
    }
    if (flips.empty()) {
      sol.converged = true;
      break;
    }
    if (outer == config.max_outer) break;

    std::sort(flips.begin(), flips.end(), [](const Flip& a, const Flip& b) {
      if (a.violation != b.violation) return a.violation > b.violation;
      return a.node < b.node;
    });
    // Three regimes. The seed claims its whole connected blob in one shot; a
    // partial claim leaves a mask strictly inside the final one, and from
    // there rim releases outnumber the sub-threshold claims (whose violation
    // is capped at delta_h) and the mask melts away. Strong violations, which
    // are always releases, shed a full rim layer per solve and walk an
    // oversized mask inward. Only the endgame, where claims and releases
    // compete at comparable violations, needs the damped largest-first rule
    // to keep marginal nodes from flapping.
    std::size_t count;
    if (seeding) {
      count = flips.size();
    } else if (flips.front().violation > kStrongViolation * sol.delta_h) {
      count = 0;
      while (count < flips.size() && flips[count].violation > kStrongViolation * sol.delta_h)
        ++count;
    } else {
      count =
          static_cast<std::size_t>(std::ceil(config.damping * static_cast<double>(flips.size())));
    }
    for (std::size_t i = 0; i < count && i < flips.size(); ++i)
      sol.inactive[flips[i].node] ^= 1;
  }

  if (!sol.converged) {
    sol.inactive = std::move(best_mask);
    ps = std::move(best_ps);
    sol.outer_iterations = best_outer;
    sol.final_mismatch = best_mismatch;
  }
  sol.values = ps.values;
  sol.residuals.cg_residual = ps.final_residual;
  sol.last_cg_history = ps.residual_history;

  // Nodal gradients everywhere a one-sided or central difference is available.
  for (int d = 0; d < grid.dimension(); ++d)
    sol.gradients[static_cast<std::size_t>(d)].assign(grid.node_count(), 0.0);
  std::array<int, 3> idx{0, 0, 0};
  for (std::size_t p = 0; p < grid.node_count(); ++p) {
    if (grid.node_class(p) == Grid::exterior) continue;
    grid.indices_of(p, std::span<int>(idx.data(), static_cast<std::size_t>(grid.dimension())));
    for (int d = 0; d < grid.dimension(); ++d) {
      const int i = idx[static_cast<std::size_t>(d)];
      const bool has_lo = i > 0 && std::isfinite(sol.values[grid.neighbor(p, d, -1)]);
      const bool has_hi = i < grid.cells() && std::isfinite(sol.values[grid.neighbor(p, d, +1)]);
      double gd = 0.0;
      if (has_lo && has_hi)
        gd = (sol.values[grid.neighbor(p, d, +1)] - sol.values[grid.neighbor(p, d, -1)]) /
             (2.0 * grid.spacing());
      else if (has_hi)
        gd = (sol.values[grid.neighbor(p, d, +1)] - sol.values[p]) / grid.spacing();
      else if (has_lo)
        gd = (sol.values[p] - sol.values[grid.neighbor(p, d, -1)]) / grid.spacing();
      sol.gradients[static_cast<std::size_t>(d)][p] = gd;
    }
  }

  // Self-consistency metrics.
  double max_grad_mask = 0.0, max_lap_res = 0.0;
  const double inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
  for (std::size_t k = 0; k < grid.unknown_count(); ++k) {
    const std::size_t p = grid.unknown_node(k);
    double g2 = 0.0;
    for (int d = 0; d < grid.dimension(); ++d) {
      const double gd = sol.gradients[static_cast<std::size_t>(d)][p];
      g2 += gd * gd;
    }
    double lap = -2.0 * grid.dimension() * sol.values[p] * inv_h2;
    for (int d = 0; d < grid.dimension(); ++d)
      for (int s : {-1, 1}) lap += sol.values[grid.neighbor(p, d, s)] * inv_h2;
    if (sol.inactive[p])
      max_grad_mask = std::max(max_grad_mask, std::sqrt(g2));
    else
      max_lap_res = std::max(max_lap_res, std::abs(lap - 1.0));
  }
  sol.residuals.max_gradient_on_mask = max_grad_mask;
  sol.residuals.max_active_lap_residual = max_lap_res;

  std::array<int, 3> mid{grid.cells() / 2, grid.cells() / 2, grid.cells() / 2};
  const std::size_t origin =
      grid.node_of(std::span<const int>(mid.data(), static_cast<std::size_t>(grid.dimension())));
  double g0 = 0.0;
  for (int d = 0; d < grid.dimension(); ++d) {
    const double gd = sol.gradients[static_cast<std::size_t>(d)][origin];
    g0 += gd * gd;
  }
  sol.residuals.gradient_at_origin = std::sqrt(g0);
  return sol;
}

// ---------------------------------------------------------------------------
// Field view
// ---------------------------------------------------------------------------

namespace {

class GridField final : public SolutionField {
 public:
  explicit GridField(std::shared_ptr<const GridSolution> sol) : sol_(std::move(sol)) {
    const Grid& g = sol_->grid;
    std::array<int, 3> mid{g.cells() / 2, g.cells() / 2, g.cells() / 2};
    const std::size_t origin =
        g.node_of(std::span<const int>(mid.data(), static_cast<std::size_t>(g.dimension())));
    v0_ = sol_->values[origin];
    cubes_.dimension = g.dimension();
    cubes_.side = g.spacing();
    for (std::size_t p = 0; p < g.node_count(); ++p)
      if (sol_->inactive[p]) {
        const Vec x = g.coords(p);
        cubes_.centers.insert(cubes_.centers.end(), x.begin(), x.end());
      }
  }

  int dimension() const override { return sol_->grid.dimension(); }
  FieldMode mode() const override { return FieldMode::solution; }

  double value(std::span<const double> x) const override {
    return interpolate(sol_->values.data(), nullptr, x) - v0_;
  }

  Vec gradient(std::span<const double> x) const override {
    Vec g(static_cast<std::size_t>(dimension()));
    for (int d = 0; d < dimension(); ++d)
      g[static_cast<std::size_t>(d)] =
          interpolate(sol_->gradients[static_cast<std::size_t>(d)].data(), nullptr, x);
    return g;
  }

  bool inactive(std::span<const double> x) const override {
    check_domain(x);
    return sol_->inactive[sol_->grid.nearest_node(x)] != 0;
  }

  std::optional<MaskCubes> mask_geometry() const override { return cubes_; }

 private:
  void check_domain(std::span<const double> x) const {
    for (double v : x)
      if (!(v >= -1.0 - 1e-12 && v <= 1.0 + 1e-12))
        throw DomainError("grid field evaluated outside [-1,1]^n");
  }

  double interpolate(const double* data, const double*, std::span<const double> x) const {
    check_domain(x);
    const Grid& g = sol_->grid;
    const int n = g.dimension();
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0.0, 0.0, 0.0};
    for (int d = 0; d < n; ++d) {
      double s = (x[static_cast<std::size_t>(d)] + 1.0) / g.spacing();
      int i = static_cast<int>(std::floor(s));
      i = std::clamp(i, 0, g.cells() - 1);
      base[static_cast<std::size_t>(d)] = i;
      frac[static_cast<std::size_t>(d)] = std::clamp(s - i, 0.0, 1.0);
    }
    double acc = 0.0;
    const int corners = 1 << n;
    for (int k = 0; k < corners; ++k) {
      double w = 1.0;
      std::array<int, 3> ci = base;
      for (int d = 0; d < n; ++d) {
        if (k & (1 << d)) {
          ++ci[static_cast<std::size_t>(d)];
          w *= frac[static_cast<std::size_t>(d)];
        } else {
          w *= 1.0 - frac[static_cast<std::size_t>(d)];
        }
      }
      if (w == 0.0) continue;
      const std::size_t p =
          g.node_of(std::span<const int>(ci.data(), static_cast<std::size_t>(n)));
      const double v = data[p];
      if (!std::isfinite(v)) throw DomainError("grid field evaluated outside the computed region");
      acc += w * v;
    }
    return acc;
  }

  std::shared_ptr<const GridSolution> sol_;
  double v0_ = 0.0;
  MaskCubes cubes_;
};

}  // namespace

std::shared_ptr<const SolutionField> field_of(std::shared_ptr<const GridSolution> solution) {
  if (!solution) throw InvalidArgument("field_of: null solution");
  return std::make_shared<GridField>(std::move(solution));
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "snapshot writer assumes a little-endian host");

void write_f64(std::ofstream& os, const double* data, std::size_t count) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

void read_f64(std::ifstream& is, double* data, std::size_t count) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw DataError("snapshot: truncated binary file");
}

}  // namespace

void save_snapshot(const GridSolution& solution, const std::filesystem::path& binary_path,
                   const std::filesystem::path& sidecar_path, const std::string& boundary_desc,
                   const SolverConfig& config) {
  std::ofstream os(binary_path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("snapshot: cannot open " + binary_path.string());
  const std::int64_t dim = solution.grid.dimension();
  const std::int64_t cells = solution.grid.cells();
  const double h = solution.grid.spacing();
  os.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  os.write(reinterpret_cast<const char*>(&cells), sizeof(cells));
  os.write(reinterpret_cast<const char*>(&h), sizeof(h));
  write_f64(os, solution.values.data(), solution.values.size());
  Vec mask(solution.inactive.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = solution.inactive[i] ? 1.0 : 0.0;
  write_f64(os, mask.data(), mask.size());
  if (!os) throw DataError("snapshot: write failed for " + binary_path.string());
  os.close();

  nlohmann::ordered_json j;
  j["schema"] = "grid-snapshot-v1";
  j["dimension"] = solution.grid.dimension();
  j["cells"] = solution.grid.cells();
  j["spacing"] = solution.grid.spacing();
  j["delta_h"] = solution.delta_h;
  j["converged"] = solution.converged;
  j["outer_iterations"] = solution.outer_iterations;
  j["final_mismatch"] = solution.final_mismatch;
  j["boundary"] = boundary_desc;
  j["residuals"] = {{"cg_residual", solution.residuals.cg_residual},
                    {"max_gradient_on_mask", solution.residuals.max_gradient_on_mask},
                    {"max_active_lap_residual", solution.residuals.max_active_lap_residual},
                    {"gradient_at_origin", solution.residuals.gradient_at_origin}};
  j["solver"] = {{"dimension", config.dimension},
                 {"cells", config.cells},
                 {"threshold_factor", config.threshold_factor},
                 {"damping", config.damping},
                 {"max_outer", config.max_outer},
                 {"cg_tol", config.cg_tol},
                 {"cg_max_iter", config.cg_max_iter}};
  std::ofstream js(sidecar_path, std::ios::trunc);
  if (!js) throw DataError("snapshot: cannot open " + sidecar_path.string());
  js << j.dump(2) << "\n";
}

GridSolution load_snapshot(const std::filesystem::path& binary_path) {
  std::ifstream is(binary_path, std::ios::binary);
  if (!is) throw DataError("snapshot: cannot open " + binary_path.string());
  std::int64_t dim = 0, cells = 0;
  double h = 0.0;
  is.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  is.read(reinterpret_cast<char*>(&cells), sizeof(cells));
  is.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!is) throw DataError("snapshot: truncated header");
  if (dim < 2 || dim > 3 || cells < 8) throw DataError("snapshot: invalid header");

  GridSolution sol;
  sol.grid = Grid::make(static_cast<int>(dim), static_cast<int>(cells));
  if (std::abs(sol.grid.spacing() - h) > 1e-12 * std::abs(h))
    throw DataError("snapshot: inconsistent spacing in header");
  sol.values.assign(sol.grid.node_count(), kNaN);
  read_f64(is, sol.values.data(), sol.values.size());
  Vec mask(sol.grid.node_count());
  read_f64(is, mask.data(), mask.size());
  sol.inactive.assign(sol.grid.node_count(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) sol.inactive[i] = mask[i] > 0.5 ? 1 : 0;

  std::filesystem::path sidecar = binary_path;
  sidecar.replace_extension(".json");
  if (std::filesystem::exists(sidecar)) {
    std::ifstream js(sidecar);
    nlohmann::json j;
    js >> j;
    sol.delta_h = j.value("delta_h", 0.0);
    sol.converged = j.value("converged", false);
    sol.outer_iterations = j.value("outer_iterations", 0);
    if (j.contains("residuals")) {
      const auto& r = j["residuals"];
      sol.residuals.cg_residual = r.value("cg_residual", 0.0);
      sol.residuals.max_gradient_on_mask = r.value("max_gradient_on_mask", 0.0);
      sol.residuals.max_active_lap_residual = r.value("max_active_lap_residual", 0.0);
      sol.residuals.gradient_at_origin = r.value("gradient_at_origin", 0.0);
    }
  } else {
    sol.delta_h = 0.5 * sol.grid.spacing();
    sol.converged = true;
  }

  // Rebuild nodal gradients from the stored values.
  for (int d = 0; d < sol.grid.dimension(); ++d)
    sol.gradients[static_cast<std::size_t>(d)].assign(sol.grid.node_count(), 0.0);
  std::array<int, 3> idx{0, 0, 0};
  for (std::size_t p = 0; p < sol.grid.node_count(); ++p) {
    if (sol.grid.node_class(p) == Grid::exterior) continue;
    sol.grid.indices_of(p, std::span<int>(idx.data(), static_cast<std::size_t>(sol.grid.dimension())));
    for (int d = 0; d < sol.grid.dimension(); ++d) {
      const int i = idx[static_cast<std::size_t>(d)];
      const bool has_lo =
          i > 0 && std::isfinite(sol.values[sol.grid.neighbor(p, d, -1)]);
      const bool has_hi =
          i < sol.grid.cells() && std::isfinite(sol.values[sol.grid.neighbor(p, d, +1)]);
      double gd = 0.0;
      if (has_lo && has_hi)
        gd = (sol.values[sol.grid.neighbor(p, d, +1)] - sol.values[sol.grid.neighbor(p, d, -1)]) /
             (2.0 * sol.grid.spacing());
      else if (has_hi)
        gd = (sol.values[sol.grid.neighbor(p, d, +1)] - sol.values[p]) / sol.grid.spacing();
      else if (has_lo)
        gd = (sol.values[p] - sol.values[sol.grid.neighbor(p, d, -1)]) / sol.grid.spacing();
      sol.gradients[static_cast<std::size_t>(d)][p] = gd;
    }
  }
  return sol;
}

}  // namespace blowup
