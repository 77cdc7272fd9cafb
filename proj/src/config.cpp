#include "blowup/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "blowup/errors.hpp"
#include "blowup/report.hpp"

namespace blowup {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& origin, const std::string& what) {
  throw ConfigError(origin + ": " + what);
}

void expect_keys(const json& obj, const std::string& origin, const std::string& where,
                 const std::set<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key()))
      fail(origin, "unknown key '" + item.key() + "' in " + where);
  }
}

double get_number(const json& obj, const std::string& origin, const std::string& key,
                  double fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) fail(origin, "missing required field '" + key + "'");
    return fallback;
  }
  if (!obj[key].is_number()) fail(origin, "field '" + key + "' must be a number");
  return obj[key].get<double>();
}

long get_integer(const json& obj, const std::string& origin, const std::string& key,
                 long fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) fail(origin, "missing required field '" + key + "'");
    return fallback;
  }
  if (!obj[key].is_number_integer()) fail(origin, "field '" + key + "' must be an integer");
  return obj[key].get<long>();
}

std::string get_string(const json& obj, const std::string& origin, const std::string& key,
                       const std::string& fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) fail(origin, "missing required field '" + key + "'");
    return fallback;
  }
  if (!obj[key].is_string()) fail(origin, "field '" + key + "' must be a string");
  return obj[key].get<std::string>();
}

std::vector<double> get_vector(const json& obj, const std::string& origin, const std::string& key) {
  if (!obj.contains(key) || !obj[key].is_array())
    fail(origin, "field '" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& v : obj[key]) {
    if (!v.is_number()) fail(origin, "field '" + key + "' must contain only numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

TraceFreeSym parse_seed(const json& arr, const std::string& origin, int dimension) {
  const std::size_t packed = static_cast<std::size_t>(dimension) *
                             static_cast<std::size_t>(dimension + 1) / 2;
  std::vector<double> upper;
  for (const auto& v : arr) {
    if (!v.is_number()) fail(origin, "'seed' must contain only numbers");
    upper.push_back(v.get<double>());
  }
  if (upper.size() != packed)
    fail(origin, "'seed' must list the packed upper triangle (" + std::to_string(packed) +
                     " entries for dimension " + std::to_string(dimension) + ")");
  const SymMat m = SymMat::from_packed(dimension, upper);
  if (std::abs(m.trace()) > 1e-12)
    fail(origin, "'seed' must be trace-free (|trace| <= 1e-12)");
  return TraceFreeSym::from(m);
}

}  // namespace

std::size_t ScaleSpec::steps_per_halving() const {
  if (steps < 1) throw ConfigError("scales: 'steps' must be at least 1");
  if (!(t_end > t_start)) throw ConfigError("scales: 't_end' must exceed 't_start'");
  if (t_start < 0.0) throw ConfigError("scales: 't_start' must be nonnegative");
  const double spacing = (t_end - t_start) / steps;
  const long long per = std::llround(std::numbers::ln2 / spacing);
  if (per < 1 || std::abs(per * spacing - std::numbers::ln2) > 1e-9)
    throw ConfigError(
        "scales: spacing (t_end - t_start)/steps must divide ln 2, so dyadic lookups are exact "
        "(e.g. steps = 8 per factor of 2 in scale)");
  return static_cast<std::size_t>(per);
}

std::vector<double> ScaleSpec::grid() const {
  const double spacing = std::numbers::ln2 / static_cast<double>(steps_per_halving());
  std::vector<double> t(static_cast<std::size_t>(steps) + 1);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = t_start + static_cast<double>(i) * spacing;
  return t;
}

void RunConfig::validate() const {
  if (version != 1) throw ConfigError("config: unsupported 'version' (expected 1)");
  if (dimension != 2 && dimension != 3)
    throw ConfigError("config: the run pipeline supports dimension 2 or 3");
  scales.steps_per_halving();
  if (series.k_max < 0) throw ConfigError("config: 'k_max' must be nonnegative");
  if (series.integration.samples < 100)
    throw ConfigError("integration: 'samples' must be at least 100");
  if (window_start < scales.t_start - 1e-12 || window_start > scales.t_end + 1e-12)
    throw ConfigError("config: 'window_start' must lie inside the scale range");
  if (mode == RunMode::synth) {
    if (patches.dimension != dimension)
      throw ConfigError("config: patch dimension disagrees with 'dimension'");
    patches.validate();
  } else {
    if (solve.boundary == BoundaryKind::radial) {
      if (!(solve.radius > 0.0 && solve.radius < 1.0))
        throw ConfigError("solver: radial 'radius' must lie in (0, 1)");
    } else if (!solve.coeff.empty()) {
      const std::size_t packed = static_cast<std::size_t>(dimension) *
                                 static_cast<std::size_t>(dimension + 1) / 2;
      if (solve.coeff.size() != packed)
        throw ConfigError("solver: quadratic 'coeff' must list the packed upper triangle");
    }
    if (solve.solver.dimension != dimension)
      throw ConfigError("solver: grid dimension disagrees with 'dimension'");
  }
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!root.is_object()) fail(origin, "top level must be a JSON object");
  expect_keys(root, origin, "the top level",
              {"version", "mode", "dimension", "patches", "seed", "solver", "scales", "k_max",
               "integration", "quadrature", "annulus_scan", "window_start", "output"});

  RunConfig cfg;
  cfg.version = static_cast<int>(get_integer(root, origin, "version", 1, true));
  const std::string mode = get_string(root, origin, "mode", "", true);
  if (mode == "synth")
    cfg.mode = RunMode::synth;
  else if (mode == "solve")
    cfg.mode = RunMode::solve;
  else
    fail(origin, "'mode' must be \"synth\" or \"solve\"");
  cfg.dimension = static_cast<int>(get_integer(root, origin, "dimension", 2));

  if (cfg.mode == RunMode::synth) {
    if (!root.contains("patches") || !root["patches"].is_array())
      fail(origin, "synth mode needs a 'patches' array");
    cfg.patches.dimension = cfg.dimension;
    for (std::size_t i = 0; i < root["patches"].size(); ++i) {
      const auto& p = root["patches"][i];
      if (!p.is_object()) fail(origin, "patch " + std::to_string(i) + " must be an object");
      expect_keys(p, origin, "patch " + std::to_string(i), {"center", "radius"});
      BallPatch patch;
      patch.center = get_vector(p, origin, "center");
      patch.radius = get_number(p, origin, "radius", 0.0, true);
      cfg.patches.patches.push_back(std::move(patch));
    }
    cfg.patches.seed = TraceFreeSym(cfg.dimension);
    if (root.contains("seed")) cfg.patches.seed = parse_seed(root["seed"], origin, cfg.dimension);
  } else {
    if (root.contains("patches")) fail(origin, "'patches' is only valid in synth mode");
    if (!root.contains("solver") || !root["solver"].is_object())
      fail(origin, "solve mode needs a 'solver' object");
    const auto& s = root["solver"];
    expect_keys(s, origin, "'solver'",
                {"cells", "boundary", "radius", "coeff", "threshold_factor", "damping",
                 "max_outer", "cg_tol", "cg_max_iter"});
    cfg.solve.solver.dimension = cfg.dimension;
    cfg.solve.solver.cells = static_cast<int>(get_integer(s, origin, "cells", 128));
    const std::string kind = get_string(s, origin, "boundary", "radial");
    if (kind == "radial")
      cfg.solve.boundary = BoundaryKind::radial;
    else if (kind == "quadratic")
      cfg.solve.boundary = BoundaryKind::quadratic;
    else
      fail(origin, "solver 'boundary' must be \"radial\" or \"quadratic\"");
    cfg.solve.radius = get_number(s, origin, "radius", 0.4);
    if (s.contains("coeff")) cfg.solve.coeff = get_vector(s, origin, "coeff");
    cfg.solve.solver.threshold_factor = get_number(s, origin, "threshold_factor", 0.5);
    cfg.solve.solver.damping = get_number(s, origin, "damping", 0.3);
    cfg.solve.solver.max_outer = static_cast<int>(get_integer(s, origin, "max_outer", 200));
    cfg.solve.solver.cg_tol = get_number(s, origin, "cg_tol", 1e-10);
    cfg.solve.solver.cg_max_iter =
        static_cast<int>(get_integer(s, origin, "cg_max_iter", 20000));
  }

  if (root.contains("scales")) {
    const auto& sc = root["scales"];
    if (!sc.is_object()) fail(origin, "'scales' must be an object");
    expect_keys(sc, origin, "'scales'", {"t_start", "t_end", "steps"});
    cfg.scales.t_start = get_number(sc, origin, "t_start", 0.0);
    cfg.scales.t_end = get_number(sc, origin, "t_end", cfg.scales.t_end, true);
    cfg.scales.steps = static_cast<int>(get_integer(sc, origin, "steps", 80, true));
  }

  cfg.series.k_max = static_cast<int>(get_integer(root, origin, "k_max", 8));

  if (root.contains("integration")) {
    const auto& it = root["integration"];
    if (!it.is_object()) fail(origin, "'integration' must be an object");
    expect_keys(it, origin, "'integration'",
                {"kind", "samples", "seed", "strata", "independent_samples"});
    const std::string kind = get_string(it, origin, "kind", "closed_form");
    if (kind == "closed_form")
      cfg.series.integration.kind = IntegrationSpec::Kind::closed_form;
    else if (kind == "sampled")
      cfg.series.integration.kind = IntegrationSpec::Kind::sampled;
    else
      fail(origin, "integration 'kind' must be \"closed_form\" or \"sampled\"");
    cfg.series.integration.samples = get_integer(it, origin, "samples", 20000);
    if (it.contains("seed")) {
      if (!it["seed"].is_number_integer() || it["seed"].get<long long>() < 0)
        fail(origin, "integration 'seed' must be a nonnegative integer");
      cfg.series.integration.seed = it["seed"].get<std::uint64_t>();
    } else if (kind == "sampled") {
      fail(origin, "integration 'seed' is required when kind is \"sampled\"");
    }
    cfg.series.integration.strata =
        static_cast<int>(get_integer(it, origin, "strata", 16));
    cfg.series.indep_samples = get_integer(it, origin, "independent_samples", 20000);
  }

  if (root.contains("quadrature")) {
    const auto& q = root["quadrature"];
    if (!q.is_object()) fail(origin, "'quadrature' must be an object");
    expect_keys(q, origin, "'quadrature'",
                {"circle_nodes", "polar_nodes", "azimuth_nodes", "qmc_count"});
    cfg.series.circle_nodes = static_cast<int>(get_integer(q, origin, "circle_nodes", 64));
    cfg.series.polar_nodes = static_cast<int>(get_integer(q, origin, "polar_nodes", 16));
    cfg.series.azimuth_nodes = static_cast<int>(get_integer(q, origin, "azimuth_nodes", 32));
    cfg.series.qmc_count = static_cast<int>(get_integer(q, origin, "qmc_count", 4096));
  }

  if (root.contains("annulus_scan")) {
    const auto& a = root["annulus_scan"];
    if (!a.is_object()) fail(origin, "'annulus_scan' must be an object");
    expect_keys(a, origin, "'annulus_scan'", {"radial", "angular"});
    cfg.series.annulus_radial = static_cast<int>(get_integer(a, origin, "radial", 48));
    cfg.series.annulus_angular = static_cast<int>(get_integer(a, origin, "angular", 256));
  }

  cfg.window_start = get_number(root, origin, "window_start", cfg.scales.t_start);

  if (root.contains("output")) {
    const auto& o = root["output"];
    if (!o.is_object()) fail(origin, "'output' must be an object");
    expect_keys(o, origin, "'output'", {"dir", "prefix"});
    cfg.output.dir = get_string(o, origin, "dir", cfg.output.dir);
    cfg.output.prefix = get_string(o, origin, "prefix", cfg.output.prefix);
  }

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.filename().string());
}

BoundaryFn make_boundary(const RunConfig& config, std::string* description) {
  if (config.solve.boundary == BoundaryKind::radial) {
    if (description)
      *description = "radial free-boundary solution, rho = " + g17(config.solve.radius);
    return radial_solution_boundary(config.dimension, config.solve.radius);
  }
  TraceFreeSym coeff(config.dimension);
  if (!config.solve.coeff.empty()) {
    const SymMat m = SymMat::from_packed(config.dimension, config.solve.coeff);
    if (std::abs(m.trace()) > 1e-12)
      throw ConfigError("solver: quadratic 'coeff' must be trace-free");
    coeff = TraceFreeSym::from(m);
  }
  if (description) *description = "quadratic profile q_B";
  return quadratic_boundary(QuadraticProfile(coeff));
}

}  // namespace blowup
