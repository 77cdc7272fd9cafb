#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "blowup/dynamics.hpp"
#include "blowup/fields.hpp"
#include "blowup/solver.hpp"

namespace blowup {

enum class RunMode { synth, solve };

// Scale grid; spacing must divide ln 2 exactly so dyadic lookups are index
// shifts. The grid is regenerated from (t_start, steps_per_halving) to avoid
// accumulated rounding.
struct ScaleSpec {
  double t_start = 0.0;
  double t_end = 10.0 * 0.69314718055994531;
  int steps = 80;

  std::size_t steps_per_halving() const;  // throws ConfigError when misaligned
  std::vector<double> grid() const;
};

enum class BoundaryKind { quadratic, radial };

struct SolveSpec {
  BoundaryKind boundary = BoundaryKind::radial;
  double radius = 0.4;              // radial data: inactive-ball radius
  std::vector<double> coeff;        // quadratic data: packed upper triangle of B
  SolverConfig solver;
};

struct OutputSpec {
  std::string dir = "out";
  std::string prefix = "run";
};

struct RunConfig {
  int version = 1;
  RunMode mode = RunMode::synth;
  int dimension = 2;
  PatchConfig patches;   // synth mode
  SolveSpec solve;       // solve mode
  ScaleSpec scales;
  SeriesOptions series;  // k_max, integration, quadrature orders, annulus scan
  double window_start = 0.0;
  OutputSpec output;

  void validate() const;
};

// Strict-schema JSON: unknown keys are rejected by name, parse errors carry
// the byte offset reported by the parser.
RunConfig parse_run_config(const std::string& text, const std::string& origin);
RunConfig load_run_config(const std::filesystem::path& path);

BoundaryFn make_boundary(const RunConfig& config, std::string* description);

}  // namespace blowup
