#pragma once

#include <memory>
#include <string>
#include <vector>

#include "blowup/config.hpp"
#include "blowup/dynamics.hpp"

namespace blowup {

struct CheckLine {
  std::string name;
  bool hard = true;  // hard checks gate the exit status; soft lines never do
  bool pass = true;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunReport {
  RunConfig config;
  ScaleSeries series;
  DissipationReport dissipation;
  std::vector<DyadicRecord> dyadic;
  std::vector<CheckLine> checks;
  std::vector<std::string> artifacts;
  std::vector<StageTiming> timings;  // stderr-only; never part of canonical output
  bool solver_converged = true;
  bool ok = true;
};

// Full pipeline: build the field, sweep scales, run every identity check,
// write the CSV / JSON artifacts. Deterministic for a fixed config.
RunReport run(const RunConfig& config);

// Same pipeline on an already-built field (snapshot analysis, tests).
RunReport run_with_field(const RunConfig& config, const SolutionField& field,
                         const std::string& field_desc);

// Analysis of a stored grid snapshot.
RunReport run_analyze(const RunConfig& config, const std::filesystem::path& snapshot);

// Deterministic check table; timings are reported separately.
std::string render_run_table(const RunReport& report);

}  // namespace blowup
