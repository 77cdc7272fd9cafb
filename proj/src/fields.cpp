#include "blowup/fields.hpp"

#include <cmath>
#include <string>

#include "blowup/errors.hpp"

namespace blowup {

namespace {

double dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

void PatchConfig::validate() const {
  if (dimension < 2) throw ConfigError("patch config: dimension must be >= 2");
  if (seed.dim() != dimension) throw ConfigError("patch config: seed dimension mismatch");
  for (std::size_t j = 0; j < patches.size(); ++j) {
    const BallPatch& p = patches[j];
    const std::string tag = "patch " + std::to_string(j);
    if (static_cast<int>(p.center.size()) != dimension)
      throw ConfigError(tag + ": center dimension mismatch");
    if (!(p.radius > 0.0)) throw ConfigError(tag + ": radius must be positive");
    const double c = norm(p.center);
    if (!(c + p.radius < 1.0))
      throw ConfigError(tag + ": ball must lie strictly inside the unit ball");
    if (!(c > p.radius)) throw ConfigError(tag + ": ball must not contain the origin");
  }
  for (std::size_t i = 0; i < patches.size(); ++i)
    for (std::size_t j = i + 1; j < patches.size(); ++j) {
      const double gap = dist(patches[i].center, patches[j].center);
      if (!(gap > patches[i].radius + patches[j].radius))
        throw ConfigError("patches " + std::to_string(i) + " and " + std::to_string(j) +
                          " overlap or touch");
    }
}

PotentialValue ball_potential(std::span<const double> center, double radius,
                              std::span<const double> x) {
  const int n = static_cast<int>(center.size());
  if (n < 2) throw InvalidArgument("ball_potential: dimension must be >= 2");
  if (x.size() != center.size()) throw InvalidArgument("ball_potential: point dimension mismatch");
  if (!(radius > 0.0)) throw InvalidArgument("ball_potential: radius must be positive");

  PotentialValue out;
  out.gradient.assign(n, 0.0);
  const double r = dist(x, center);
  if (r <= radius) {
    out.value = r * r / (2.0 * n);
    for (int i = 0; i < n; ++i) out.gradient[i] = (x[i] - center[i]) / n;
    return out;
  }
  if (n == 2) {
    out.value = radius * radius / 4.0 + 0.5 * radius * radius * std::log(r / radius);
    const double f = radius * radius / (2.0 * r * r);
    for (int i = 0; i < n; ++i) out.gradient[i] = f * (x[i] - center[i]);
    return out;
  }
  const double rn = std::pow(radius, n);
  out.value = radius * radius / (2.0 * n) + radius * radius / (n * (n - 2.0)) -
              rn / (n * (n - 2.0)) * std::pow(r, 2.0 - n);
  const double f = rn / n * std::pow(r, -static_cast<double>(n));
  for (int i = 0; i < n; ++i) out.gradient[i] = f * (x[i] - center[i]);
  return out;
}

// ---------------------------------------------------------------------------
// SyntheticSolution
// ---------------------------------------------------------------------------

SyntheticSolution::SyntheticSolution(PatchConfig config)
    : config_(std::move(config)), profile_(config_.seed) {
  config_.validate();
  const int n = config_.dimension;
  tilt_.assign(n, 0.0);
  offset_ = 0.0;
  const Vec origin(n, 0.0);
  for (const BallPatch& p : config_.patches) {
    const PotentialValue w0 = ball_potential(p.center, p.radius, origin);
    offset_ += w0.value;
    for (int i = 0; i < n; ++i) tilt_[i] += w0.gradient[i];
  }
}

double SyntheticSolution::value(std::span<const double> x) const {
  double v = profile_.value(x) + dot(tilt_, x) + offset_;
  for (const BallPatch& p : config_.patches) v -= ball_potential(p.center, p.radius, x).value;
  return v;
}

Vec SyntheticSolution::gradient(std::span<const double> x) const {
  Vec g = profile_.gradient(x);
  for (int i = 0; i < dimension(); ++i) g[i] += tilt_[i];
  for (const BallPatch& p : config_.patches) {
    const PotentialValue w = ball_potential(p.center, p.radius, x);
    for (int i = 0; i < dimension(); ++i) g[i] -= w.gradient[i];
  }
  return g;
}

bool SyntheticSolution::inactive(std::span<const double> x) const {
  for (const BallPatch& p : config_.patches)
    if (dist(x, p.center) <= p.radius) return true;
  return false;
}

std::optional<BallSet> SyntheticSolution::ball_geometry() const {
  BallSet g;
  g.dimension = dimension();
  g.balls = config_.patches;
  return g;
}

std::shared_ptr<SyntheticSolution> build_synthetic(PatchConfig config) {
  return std::make_shared<SyntheticSolution>(std::move(config));
}

// ---------------------------------------------------------------------------
// Rescaling
// ---------------------------------------------------------------------------

namespace {

class RescaledField final : public SolutionField {
 public:
  RescaledField(std::shared_ptr<const SolutionField> base, double log_scale)
      : base_(std::move(base)), t_(log_scale) {}

  int dimension() const override { return base_->dimension(); }
  FieldMode mode() const override { return base_->mode(); }

  double value(std::span<const double> x) const override {
    return std::exp(2.0 * t_) * base_->value(pullback(x));
  }
  Vec gradient(std::span<const double> x) const override {
    Vec g = base_->gradient(pullback(x));
    const double f = std::exp(t_);
    for (double& v : g) v *= f;
    return g;
  }
  bool inactive(std::span<const double> x) const override { return base_->inactive(pullback(x)); }

  std::optional<BallSet> ball_geometry() const override {
    auto g = base_->ball_geometry();
    if (!g) return g;
    const double f = std::exp(t_);
    for (BallPatch& b : g->balls) {
      for (double& c : b.center) c *= f;
      b.radius *= f;
    }
    return g;
  }

  std::optional<MaskCubes> mask_geometry() const override {
    auto g = base_->mask_geometry();
    if (!g) return g;
    const double f = std::exp(t_);
    g->side *= f;
    for (double& c : g->centers) c *= f;
    return g;
  }

 private:
  Vec pullback(std::span<const double> x) const {
    Vec y(x.begin(), x.end());
    const double f = std::exp(-t_);
    for (double& v : y) v *= f;
    return y;
  }

  std::shared_ptr<const SolutionField> base_;
  double t_;
};

}  // namespace

std::shared_ptr<const SolutionField> rescale(std::shared_ptr<const SolutionField> base,
                                             double log_scale) {
  if (!base) throw InvalidArgument("rescale: null field");
  if (log_scale == 0.0) return base;
  return std::make_shared<RescaledField>(std::move(base), log_scale);
}

}  // namespace blowup
