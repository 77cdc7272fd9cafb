#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace blowup {

struct VerifyOptions {
  int k_max = 8;              // caps the dyadic sweep depth (k = 0..min(4, k_max))
  bool mutate_kappa = false;  // sign-flip fault injection; the ODE row must then fail
  std::filesystem::path out_dir = "verify-out";
};

// One row of the verification table. Every identity anchor appears exactly
// once; `seconds` is reported on stderr only, never in the rendered table.
struct VerifyLine {
  std::string anchor;
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyReport {
  std::vector<VerifyLine> lines;
  std::vector<std::string> artifacts;
  bool ok = true;
};

// Runs the full acceptance matrix. Deterministic: two invocations produce
// byte-identical tables and artifact files.
VerifyReport run_verification(const VerifyOptions& opt);

// Fixed-width table keyed by anchor; contains no timings and no paths.
std::string render_verify_table(const VerifyReport& report);

}  // namespace blowup
