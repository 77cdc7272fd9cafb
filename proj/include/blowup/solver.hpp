#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "blowup/fields.hpp"
#include "blowup/harmonics.hpp"
#include "blowup/linalg.hpp"

namespace blowup {

// Uniform node lattice on [-1,1]^n (n = 2 or 3) with the unit ball embedded.
// Unknowns are the nodes strictly inside the ball; every other node that is a
// corner of a cell meeting the ball carries Dirichlet data (the "band").
class Grid {
 public:
  enum NodeClass : std::uint8_t { exterior = 0, band = 1, interior = 2 };

  static Grid make(int dimension, int cells);

  int dimension() const { return dim_; }
  int cells() const { return cells_; }
  double spacing() const { return h_; }
  std::size_t node_count() const { return node_count_; }
  std::size_t unknown_count() const { return unknowns_.size(); }

  NodeClass node_class(std::size_t node) const { return cls_[node]; }
  std::size_t unknown_node(std::size_t k) const { return unknowns_[k]; }
  std::ptrdiff_t unknown_index(std::size_t node) const { return unknown_of_[node]; }

  Vec coords(std::size_t node) const;
  std::size_t node_of(std::span<const int> idx) const;
  void indices_of(std::size_t node, std::span<int> idx) const;
  std::size_t neighbor(std::size_t node, int axis, int step) const;  // step = +-1
  std::size_t nearest_node(std::span<const double> x) const;

 private:
  friend struct GridSolution;
  Grid() = default;
  int dim_ = 0;
  int cells_ = 0;
  double h_ = 0.0;
  int per_axis_ = 0;
  std::size_t node_count_ = 0;
  std::vector<NodeClass> cls_;
  std::vector<std::size_t> unknowns_;
  std::vector<std::ptrdiff_t> unknown_of_;
};

// Dirichlet data evaluated at band node coordinates. Data defined only on the
// sphere itself is adapted with `on_sphere`, which projects the node radially.
using BoundaryFn = std::function<double(std::span<const double>)>;

BoundaryFn on_sphere(BoundaryFn sphere_data);
BoundaryFn quadratic_boundary(const QuadraticProfile& profile);
// Radial free-boundary solution with inactive ball radius rho: value 0 inside,
// integral of (r/n - rho^n / (n r^{n-1})) outside.
BoundaryFn radial_solution_boundary(int dimension, double rho);
double radial_solution_value(int dimension, double rho, double r);

struct SolverConfig {
  int dimension = 2;
  int cells = 128;
  double threshold_factor = 0.5;  // gradient threshold delta_h = factor * h
  double damping = 0.3;           // fraction of mismatched mask cells flipped per sweep
  int max_outer = 200;
  double cg_tol = 1e-10;
  int cg_max_iter = 20000;
};

struct PoissonResult {
  Vec values;  // all nodes; NaN on nodes that carry no value
  int iterations = 0;
  double final_residual = 0.0;
  std::vector<double> residual_history;
};

// Solves the 2n+1-point Laplacian  lap_h(u) = rhs  on the unknowns with the
// given Dirichlet band data, by conjugate gradients with diagonal (Jacobi)
// preconditioning. rhs is indexed per node; only unknown entries are read.
// Nodes flagged in `pinned` (per node, optional) are held at value zero.
PoissonResult poisson_solve(const Grid& grid, std::span<const double> rhs,
                            const BoundaryFn& boundary, double tol = 1e-10, int max_iter = 20000,
                            const Vec* warm_start = nullptr,
                            std::span<const std::uint8_t> pinned = {});

struct ResidualMetrics {
  double cg_residual = 0.0;
  double max_gradient_on_mask = 0.0;     // vs delta_h
  double max_active_lap_residual = 0.0;  // |lap_h(u) - 1| over active unknowns
  double gradient_at_origin = 0.0;       // diagnostic, not corrected
};

struct GridSolution {
  Grid grid;  // empty until a solve or a snapshot load fills it
  Vec values;
  std::array<Vec, 3> gradients;        // per axis, nodal central differences
  std::vector<std::uint8_t> inactive;  // per node; only unknowns can be set
  double delta_h = 0.0;
  bool converged = false;
  int outer_iterations = 0;
  std::size_t final_mismatch = 0;  // mask cells still wanting to flip
  ResidualMetrics residuals;
  std::vector<double> last_cg_history;
};

// Alternates Poisson solves (rhs = active indicator) with threshold updates of
// the inactive mask: a node is marked inactive when its central-difference
// gradient magnitude is at most delta_h. At most ceil(damping * mismatches)
// cells flip per sweep, largest violation first. Non-convergence within
// max_outer returns the best iterate, flagged.
GridSolution fixed_point_solve(const SolverConfig& config, const BoundaryFn& boundary);

// SolutionField view of a grid solution: multilinear interpolation of values
// and nodal gradients, nearest-node mask lookup, values shifted so that
// value(0) = 0. The gradient at the origin is reported, never subtracted.
std::shared_ptr<const SolutionField> field_of(std::shared_ptr<const GridSolution> solution);

// Flat binary snapshot (header: dimension, cells, spacing; then values and
// mask as little-endian 64-bit doubles, row-major) plus a JSON sidecar with
// the solver configuration and residual metrics.
void save_snapshot(const GridSolution& solution, const std::filesystem::path& binary_path,
                   const std::filesystem::path& sidecar_path, const std::string& boundary_desc,
                   const SolverConfig& config);
GridSolution load_snapshot(const std::filesystem::path& binary_path);

}  // namespace blowup
