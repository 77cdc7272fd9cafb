// Acceptance gate: one line per criterion, wall-clock budgets included.
// Exits nonzero when any criterion fails.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "blowup/verification.hpp"

namespace {

struct Criterion {
  int number;
  std::string label;
  bool pass = false;
  double seconds = 0.0;
  double budget = 0.0;  // 0 = no individual budget
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<unreadable:" + path.string() + ">";
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const blowup::VerifyLine* find(const blowup::VerifyReport& report, const std::string& anchor) {
  for (const auto& line : report.lines)
    if (line.anchor == anchor) return &line;
  return nullptr;
}

}  // namespace

int main() {
  blowup::VerifyOptions first_opt;
  first_opt.out_dir = "acceptance-out-a";
  const blowup::VerifyReport first = blowup::run_verification(first_opt);

  blowup::VerifyOptions second_opt;
  second_opt.out_dir = "acceptance-out-b";
  const blowup::VerifyReport second = blowup::run_verification(second_opt);

  std::vector<Criterion> criteria;
  auto take = [&](int number, const std::string& anchor, const std::string& label,
                  double budget) {
    Criterion c{number, label};
    c.budget = budget;
    if (const auto* line = find(first, anchor)) {
      c.pass = line->pass;
      c.seconds = line->seconds;
    }
    criteria.push_back(c);
  };

  take(1, "sphere-moment", "sphere moments match the gram constants (n = 2, 3)", 1.0);
  take(2, "projection", "projection recovers random B under contamination", 5.0);
  take(3, "center-ode", "projected trajectory follows the center ODE", 30.0);
  take(4, "moment-identity", "moment derivative identity at order >= 1.8", 30.0);
  take(5, "dyadic", "dyadic annulus masses agree across routes", 30.0);
  take(6, "finite-dissipation", "geometric family reaches its closed-form limit", 60.0);
  take(7, "lyapunov", "grid dissipation identity at 257^2, refining at order >= 1", 180.0);

  // criterion 8 joins the two window inequalities
  {
    Criterion c{8, "absorption window: |I0| bound and the Volterra majorant"};
    c.budget = 60.0;
    const auto* i0 = find(first, "I0-absorb");
    const auto* vol = find(first, "volterra");
    c.pass = i0 && vol && i0->pass && vol->pass;
    c.seconds = (i0 ? i0->seconds : 0.0) + (vol ? vol->seconds : 0.0);
    criteria.push_back(c);
  }

  take(9, "solver-validation", "recovered mask and values converge to the radial solution",
       180.0);

  // criterion 10: two full verification passes are byte-identical
  {
    Criterion c{10, "verification reruns are byte-identical"};
    bool same = blowup::render_verify_table(first) == blowup::render_verify_table(second);
    if (first.artifacts.size() != second.artifacts.size()) same = false;
    for (std::size_t i = 0; same && i < first.artifacts.size(); ++i)
      same = slurp(first.artifacts[i]) == slurp(second.artifacts[i]);
    const auto* det = find(first, "determinism");
    c.pass = same && det && det->pass;
    criteria.push_back(c);
  }

  int passed = 0;
  bool in_budget = true;
  for (const auto& c : criteria) {
    const bool timely = c.budget == 0.0 || c.seconds <= c.budget;
    in_budget = in_budget && timely;
    if (c.pass) ++passed;
    std::printf("criterion %02d %s %s", c.number, c.pass ? "PASS" : "FAIL", c.label.c_str());
    if (c.budget > 0.0)
      std::printf("  [%.1fs of %.0fs%s]", c.seconds, c.budget, timely ? "" : " OVER");
    std::printf("\n");
  }
  const bool ok = passed == static_cast<int>(criteria.size()) && in_budget;
  std::printf("acceptance: %s (%d/%zu)%s\n", ok ? "PASS" : "FAIL", passed, criteria.size(),
              in_budget ? "" : " with budget overruns");
  return ok ? 0 : 1;
}
