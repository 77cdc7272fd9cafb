#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "blowup/config.hpp"
#include "blowup/dynamics.hpp"
#include "blowup/errors.hpp"
#include "blowup/fields.hpp"
#include "blowup/report.hpp"
#include "blowup/runner.hpp"

using namespace blowup;

namespace {

constexpr double kLn2 = std::numbers::ln2;

std::string parse_error_of(const std::string& text) {
  try {
    parse_run_config(text, "test");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

const char* kFullConfig = R"({
  "version": 1,
  "mode": "synth",
  "dimension": 2,
  "patches": [{"center": [0.5, 0.0], "radius": 0.1}],
  "seed": [0.05, 0.0, -0.05],
  "scales": {"t_start": 0.0, "t_end": 0.43321698784996581, "steps": 5},
  "k_max": 3,
  "integration": {"kind": "sampled", "samples": 5000, "seed": 9, "strata": 8,
                  "independent_samples": 4000},
  "quadrature": {"circle_nodes": 128},
  "annulus_scan": {"radial": 24, "angular": 64},
  "window_start": 0.0,
  "output": {"dir": "cfg-out", "prefix": "demo"}
})";

}  // namespace

TEST_CASE("config parsing fills every field") {
  const RunConfig cfg = parse_run_config(kFullConfig, "test");
  CHECK(cfg.mode == RunMode::synth);
  CHECK(cfg.dimension == 2);
  REQUIRE(cfg.patches.patches.size() == 1);
  CHECK(cfg.patches.patches[0].center[0] == 0.5);
  CHECK(cfg.patches.patches[0].radius == 0.1);
  CHECK(cfg.patches.seed(0, 0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(cfg.scales.steps == 5);
  CHECK(cfg.scales.steps_per_halving() == 8);
  CHECK(cfg.series.k_max == 3);
  CHECK(cfg.series.integration.kind == IntegrationSpec::Kind::sampled);
  CHECK(cfg.series.integration.samples == 5000);
  CHECK(cfg.series.integration.seed == 9);
  CHECK(cfg.series.integration.strata == 8);
  CHECK(cfg.series.indep_samples == 4000);
  CHECK(cfg.series.circle_nodes == 128);
  CHECK(cfg.series.annulus_radial == 24);
  CHECK(cfg.series.annulus_angular == 64);
  CHECK(cfg.output.dir == "cfg-out");
  CHECK(cfg.output.prefix == "demo");

  // the scale grid is regenerated from the halving count: uniform to the bit
  const auto grid = cfg.scales.grid();
  REQUIRE(grid.size() == 6);
  CHECK(grid.front() == 0.0);
  for (std::size_t i = 1; i < grid.size(); ++i)
    CHECK(grid[i] - grid[i - 1] == doctest::Approx(kLn2 / 8.0).epsilon(1e-15));
}

TEST_CASE("config rejection: strict schema with named offenders") {
  CHECK(parse_error_of(R"({"mode": "synth", "foo": 1})").find("unknown key 'foo'") !=
        std::string::npos);
  CHECK(parse_error_of(R"({"version": 1, "mode": "weird"})").find("mode") != std::string::npos);
  CHECK(!parse_error_of(R"({"version": 1, "mode": "solve",
                            "patches": [{"center": [0.5, 0], "radius": 0.1}],
                            "solver": {}})")
             .empty());
  CHECK(parse_error_of("{ not json").find("test") != std::string::npos);

  // spacing must divide ln 2
  std::string bad = kFullConfig;
  const auto pos = bad.find("\"steps\": 5");
  bad.replace(pos, 10, "\"steps\": 7");
  CHECK(!parse_error_of(bad).empty());

  // sampled integration demands an explicit seed
  CHECK(!parse_error_of(R"({"version": 1, "mode": "synth",
                            "patches": [{"center": [0.5, 0], "radius": 0.1}],
                            "integration": {"kind": "sampled"}})")
             .empty());

  // seed array must have n(n+1)/2 entries
  CHECK(parse_error_of(R"({"version": 1, "mode": "synth",
                           "patches": [{"center": [0.5, 0], "radius": 0.1}],
                           "seed": [0.1, 0.2]})")
            .find("packed upper triangle") != std::string::npos);

  // window must lie inside the scale range
  CHECK(!parse_error_of(R"({"version": 1, "mode": "synth",
                            "patches": [{"center": [0.5, 0], "radius": 0.1}],
                            "window_start": 99.0})")
             .empty());
}

TEST_CASE("quadratic boundary coefficients must be trace-free") {
  RunConfig cfg;
  cfg.mode = RunMode::solve;
  cfg.solve.boundary = BoundaryKind::quadratic;
  cfg.solve.coeff = {0.5, 0.0, 0.5};  // trace 1
  std::string desc;
  CHECK_THROWS_AS(make_boundary(cfg, &desc), ConfigError);

  cfg.solve.coeff = {0.5, 0.0, -0.5};
  const BoundaryFn ok = make_boundary(cfg, &desc);
  const std::vector<double> x = {0.6, 0.2};
  CHECK(ok(x) == doctest::Approx((0.36 + 0.04) / 4.0 + 0.5 * (0.36 - 0.04) / 2.0).epsilon(1e-14));
}

TEST_CASE("g17 round-trips doubles exactly") {
  const double values[] = {0.1,    1.0 / 3.0,        std::numbers::pi, 1e-300, 6.02214076e23,
                           -0.125, 5e-324,           1.0,              0.0,    -7.25};
  for (const double v : values) {
    const std::string s = g17(v);
    const double back = std::strtod(s.c_str(), nullptr);
    CHECK(back == v);
  }
  CHECK(std::signbit(std::strtod(g17(-0.0).c_str(), nullptr)));
}

TEST_CASE("series CSV: versioned header, stable cells, empty for unset") {
  PatchConfig pc;
  pc.dimension = 2;
  pc.patches = {{{0.5, 0.0}, 0.1}};
  pc.seed = TraceFreeSym(2);
  const auto field = build_synthetic(pc);

  SeriesOptions opt;
  opt.k_max = 2;
  const std::vector<double> grid = {0.0, kLn2 / 8.0};
  const ScaleSeries series = build_series(*field, grid, opt);

  const std::string csv = render_series_csv(series);
  CHECK(csv.rfind("# scale-series-v1 dimension=2 mode=consistency k_max=2\n", 0) == 0);

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < csv.size()) {
    const auto stop = csv.find('\n', start);
    lines.push_back(csv.substr(start, stop - start));
    start = stop + 1;
  }
  REQUIRE(lines.size() == 4);
  CHECK(lines[1] == "t,b_1,b_2,F,F_0,F_1,F_2,I,I0,eps,lyap_residual,ode_residual");
  // consistency mode leaves the residual columns empty
  for (std::size_t r = 2; r < 4; ++r) {
    CHECK(std::count(lines[r].begin(), lines[r].end(), ',') == 11);
    CHECK(lines[r].substr(lines[r].size() - 2) == ",,");
  }
  // the t column is the exact g17 of the grid
  CHECK(lines[2].substr(0, lines[2].find(',')) == g17(0.0));
  CHECK(lines[3].substr(0, lines[3].find(',')) == g17(grid[1]));

  CHECK(render_series_csv(series) == csv);

  const DissipationReport report = convergence_report(series, 0.0, *field, opt);
  const std::string text = render_dissipation_json(report);
  CHECK(text.back() == '\n');
  CHECK(render_dissipation_json(report) == text);

  const auto parsed = nlohmann::json::parse(text);
  CHECK(parsed["schema"] == "dissipation-report-v1");
  CHECK(parsed["dimension"] == 2);
  CHECK(parsed["mode"] == "consistency");
  CHECK(parsed["b_infinity"].size() == 2);
  // consistency mode cannot check the solution-only inequalities
  CHECK(parsed["margins"]["i0_min_margin"].is_null());
  CHECK(parsed["margins"]["volterra_margin"].is_null());
}

TEST_CASE("full pipeline smoke: synth run writes artifacts and passes") {
  RunConfig cfg;
  cfg.mode = RunMode::synth;
  cfg.patches.dimension = 2;
  cfg.patches.patches = {{{0.5, 0.0}, 0.1}};
  cfg.patches.seed = TraceFreeSym(2);
  cfg.scales = {0.0, 5.0 * kLn2 / 8.0, 5};
  cfg.series.k_max = 2;
  cfg.output.dir = "runner-smoke-out";
  cfg.output.prefix = "smoke";
  cfg.validate();

  const RunReport report = run(cfg);
  CHECK(report.ok);
  CHECK(!report.checks.empty());
  REQUIRE(report.artifacts.size() >= 2);
  for (const auto& art : report.artifacts) CHECK(std::filesystem::exists(art));

  const std::string table = render_run_table(report);
  CHECK(table.find("result: PASS") != std::string::npos);
  CHECK(table.find("moment-psd") != std::string::npos);
  CHECK(table.find("volterra") != std::string::npos);

  // the same config renders byte-identical artifacts on a second run
  const RunReport again = run(cfg);
  CHECK(render_series_csv(again.series) == render_series_csv(report.series));
  CHECK(render_dissipation_json(again.dissipation) == render_dissipation_json(report.dissipation));
}
