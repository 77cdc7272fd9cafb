#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "blowup/harmonics.hpp"
#include "blowup/linalg.hpp"

namespace blowup {

// Closed ball strictly inside the open unit ball, origin excluded.
struct BallPatch {
  Vec center;
  double radius = 0.0;
};

// Prescribed inactive-set geometry plus the quadratic seed of a synthetic field.
struct PatchConfig {
  int dimension = 2;
  std::vector<BallPatch> patches;
  TraceFreeSym seed{2};

  // Throws ConfigError naming the offending patch index/pair.
  void validate() const;
};

// Geometry handed to integration engines; already at the owning field's scale,
// so it may extend beyond the unit ball.
struct BallSet {
  int dimension = 0;
  std::vector<BallPatch> balls;
};

// Inactive region of a grid solution as a union of axis-aligned cubes of one
// common side length (the lattice Voronoi cells of the inactive nodes).
struct MaskCubes {
  int dimension = 0;
  double side = 0.0;
  std::vector<double> centers;  // count * dimension, row-major

  std::size_t count() const {
    return dimension ? centers.size() / static_cast<std::size_t>(dimension) : 0;
  }
  std::span<const double> center(std::size_t i) const {
    return {centers.data() + i * static_cast<std::size_t>(dimension),
            static_cast<std::size_t>(dimension)};
  }
};

// consistency: the PDE holds with a prescribed inactive set, but the gradient
//              need not vanish there. solution: the gradient also (nearly)
//              vanishes on the inactive set, so dissipation identities apply.
enum class FieldMode { consistency, solution };

class SolutionField {
 public:
  virtual ~SolutionField() = default;

  virtual int dimension() const = 0;
  virtual FieldMode mode() const = 0;
  virtual double value(std::span<const double> x) const = 0;
  virtual Vec gradient(std::span<const double> x) const = 0;
  virtual bool inactive(std::span<const double> x) const = 0;

  // Optional geometry fast paths for volume integration.
  virtual std::optional<BallSet> ball_geometry() const { return std::nullopt; }
  virtual std::optional<MaskCubes> mask_geometry() const { return std::nullopt; }
};

struct PotentialValue {
  double value = 0.0;
  Vec gradient;
};

// Newtonian potential of the unit-density ball B(center, radius): the global
// C^{1,1} solution of  laplace(w) = indicator of the ball,  with the interior
// normalization w(x) = |x - center|^2 / (2n).
PotentialValue ball_potential(std::span<const double> center, double radius,
                              std::span<const double> x);

// u = p0 + psi_seed + L.x + K - sum_j w_j, built so that u(0) = 0, grad u(0) = 0
// and laplace(u) = 1 - indicator(union of patches).
class SyntheticSolution final : public SolutionField {
 public:
  explicit SyntheticSolution(PatchConfig config);

  int dimension() const override { return config_.dimension; }
  FieldMode mode() const override { return FieldMode::consistency; }
  double value(std::span<const double> x) const override;
  Vec gradient(std::span<const double> x) const override;
  bool inactive(std::span<const double> x) const override;
  std::optional<BallSet> ball_geometry() const override;

  const PatchConfig& config() const { return config_; }
  const Vec& tilt() const { return tilt_; }      // L
  double offset() const { return offset_; }      // K

 private:
  PatchConfig config_;
  QuadraticProfile profile_;
  Vec tilt_;
  double offset_ = 0.0;
};

std::shared_ptr<SyntheticSolution> build_synthetic(PatchConfig config);

// View of `base` at log-scale t: value e^{2t} u(e^{-t} x), gradient
// e^t grad u(e^{-t} x), inactive set dilated by e^t. Wrappers compose.
std::shared_ptr<const SolutionField> rescale(std::shared_ptr<const SolutionField> base,
                                             double log_scale);

}  // namespace blowup
