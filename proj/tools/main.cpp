#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "blowup/config.hpp"
#include "blowup/errors.hpp"
#include "blowup/report.hpp"
#include "blowup/runner.hpp"
#include "blowup/verification.hpp"

namespace {

// Every override is paired with its CLI11 option so only flags the user
// actually passed touch the config. Precedence: flag > BLOWUPLAB_OUT (output
// directory only) > config file > defaults.
struct RunFlags {
  std::string config_path;
  double t_start = 0.0, t_end = 0.0, window_start = 0.0;
  int steps = 0, k_max = 0, cells = 0;
  long samples = 0;
  std::uint64_t seed = 0;
  double radius = 0.0;
  std::string kind, boundary, out_dir, prefix;

  CLI::Option* o_config = nullptr;
  CLI::Option* o_t_start = nullptr;
  CLI::Option* o_t_end = nullptr;
  CLI::Option* o_steps = nullptr;
  CLI::Option* o_window = nullptr;
  CLI::Option* o_k_max = nullptr;
  CLI::Option* o_samples = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_kind = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_prefix = nullptr;
  CLI::Option* o_cells = nullptr;
  CLI::Option* o_boundary = nullptr;
  CLI::Option* o_radius = nullptr;
};

void add_series_flags(CLI::App* sub, RunFlags& f) {
  f.o_t_start = sub->add_option("--t-start", f.t_start, "first log-scale");
  f.o_t_end = sub->add_option("--t-end", f.t_end, "last log-scale");
  f.o_steps = sub->add_option("--steps", f.steps, "scale intervals (spacing must divide ln 2)");
  f.o_window = sub->add_option("--window-start", f.window_start, "start of the report window");
  f.o_k_max = sub->add_option("--k-max", f.k_max, "deepest dyadic annulus");
  f.o_samples = sub->add_option("--samples", f.samples, "sample count for sampled integration");
  f.o_seed = sub->add_option("--seed", f.seed, "integration seed");
  f.o_kind = sub->add_option("--kind", f.kind, "integration kind: closed or sampled")
                 ->check(CLI::IsMember({"closed", "sampled"}));
  f.o_out = sub->add_option("--out", f.out_dir, "output directory");
  f.o_prefix = sub->add_option("--prefix", f.prefix, "artifact file prefix");
}

void add_solve_flags(CLI::App* sub, RunFlags& f) {
  f.o_cells = sub->add_option("--cells", f.cells, "grid cells per axis");
  f.o_boundary = sub->add_option("--boundary", f.boundary, "boundary data: radial or quadratic")
                     ->check(CLI::IsMember({"radial", "quadratic"}));
  f.o_radius = sub->add_option("--radius", f.radius, "inactive-ball radius for radial data");
}

blowup::RunConfig build_config(const RunFlags& f, blowup::RunMode subcommand_mode) {
  blowup::RunConfig cfg;
  if (f.o_config->count()) {
    cfg = blowup::load_run_config(f.config_path);
    if (cfg.mode != subcommand_mode)
      throw blowup::ConfigError(f.config_path + ": config mode does not match the subcommand");
  } else {
    cfg.mode = subcommand_mode;
  }
  if (const char* env = std::getenv("BLOWUPLAB_OUT")) cfg.output.dir = env;

  if (f.o_t_start->count()) cfg.scales.t_start = f.t_start;
  if (f.o_t_end->count()) cfg.scales.t_end = f.t_end;
  if (f.o_steps->count()) cfg.scales.steps = f.steps;
  if (f.o_window->count()) cfg.window_start = f.window_start;
  if (f.o_k_max->count()) cfg.series.k_max = f.k_max;
  if (f.o_samples->count()) cfg.series.integration.samples = f.samples;
  if (f.o_seed->count()) cfg.series.integration.seed = f.seed;
  if (f.o_kind->count())
    cfg.series.integration.kind = (f.kind == "sampled")
                                      ? blowup::IntegrationSpec::Kind::sampled
                                      : blowup::IntegrationSpec::Kind::closed_form;
  if (f.o_out->count()) cfg.output.dir = f.out_dir;
  if (f.o_prefix->count()) cfg.output.prefix = f.prefix;

  if (f.o_cells && f.o_cells->count()) cfg.solve.solver.cells = f.cells;
  if (f.o_boundary && f.o_boundary->count())
    cfg.solve.boundary = (f.boundary == "quadratic") ? blowup::BoundaryKind::quadratic
                                                     : blowup::BoundaryKind::radial;
  if (f.o_radius && f.o_radius->count()) cfg.solve.radius = f.radius;

  cfg.validate();
  return cfg;
}

int finish_run(const blowup::RunReport& report) {
  std::fputs(blowup::render_run_table(report).c_str(), stdout);
  for (const auto& timing : report.timings)
    std::fprintf(stderr, "# %-12s %.3fs\n", timing.stage.c_str(), timing.seconds);
  return report.ok ? 0 : 1;
}

int run_verify(const blowup::VerifyOptions& opt) {
  const blowup::VerifyReport report = blowup::run_verification(opt);
  const std::string table = blowup::render_verify_table(report);
  std::fputs(table.c_str(), stdout);
  blowup::write_text_file(opt.out_dir / "verify-table.txt", table);
  for (const auto& line : report.lines)
    std::fprintf(stderr, "# %-19s %.3fs\n", line.anchor.c_str(), line.seconds);
  for (const auto& art : report.artifacts) std::fprintf(stderr, "# wrote %s\n", art.c_str());
  std::fprintf(stderr, "# wrote %s\n", (opt.out_dir / "verify-table.txt").string().c_str());
  return report.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"free-boundary rescaling laboratory"};
  app.require_subcommand(1);

  RunFlags synth_flags, solve_flags, analyze_flags;

  CLI::App* synth = app.add_subcommand("synth", "sweep a synthetic ball configuration");
  synth_flags.o_config =
      synth->add_option("--config", synth_flags.config_path, "run configuration JSON")
          ->required()
          ->check(CLI::ExistingFile);
  add_series_flags(synth, synth_flags);

  CLI::App* solve = app.add_subcommand("solve", "solve the obstacle problem, then sweep");
  solve_flags.o_config =
      solve->add_option("--config", solve_flags.config_path, "run configuration JSON")
          ->check(CLI::ExistingFile);
  add_series_flags(solve, solve_flags);
  add_solve_flags(solve, solve_flags);

  CLI::App* analyze = app.add_subcommand("analyze", "sweep a stored grid snapshot");
  std::string snapshot_path;
  analyze->add_option("--snapshot", snapshot_path, "snapshot binary written by solve")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_flags.o_config =
      analyze->add_option("--config", analyze_flags.config_path, "run configuration JSON")
          ->check(CLI::ExistingFile);
  add_series_flags(analyze, analyze_flags);

  CLI::App* verify = app.add_subcommand("verify", "run the full identity-check matrix");
  blowup::VerifyOptions verify_opt;
  verify->add_option("--out", verify_opt.out_dir, "directory for tables and artifacts");
  verify->add_option("--k-max", verify_opt.k_max, "caps the dyadic sweep depth");
  verify->add_flag("--mutate-kappa", verify_opt.mutate_kappa,
                   "flip the sign of kappa; the center-ode row must fail");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return finish_run(blowup::run(build_config(synth_flags, blowup::RunMode::synth)));
    if (solve->parsed())
      return finish_run(blowup::run(build_config(solve_flags, blowup::RunMode::solve)));
    if (analyze->parsed())
      return finish_run(blowup::run_analyze(build_config(analyze_flags, blowup::RunMode::solve),
                                            snapshot_path));
    return run_verify(verify_opt);
  } catch (const blowup::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blowup::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const blowup::InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
