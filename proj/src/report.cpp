#include "blowup/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "blowup/errors.hpp"

namespace blowup {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void append_cell(std::string& out, double v) {
  out.push_back(',');
  if (std::isfinite(v)) out += g17(v);
}

const char* mode_name(FieldMode mode) {
  return mode == FieldMode::solution ? "solution" : "consistency";
}

}  // namespace

std::string render_series_csv(const ScaleSeries& series) {
  const HarmonicBasis basis(series.dimension);
  std::string out;
  out += "# scale-series-v1 dimension=" + std::to_string(series.dimension) + " mode=" +
         mode_name(series.mode) + " k_max=" + std::to_string(series.k_max) + "\n";
  out += "t";
  for (int j = 0; j < basis.size(); ++j) out += ",b_" + std::to_string(j + 1);
  out += ",F";
  for (int k = 0; k <= series.k_max; ++k) out += ",F_" + std::to_string(k);
  out += ",I,I0,eps,lyap_residual,ode_residual\n";

  for (const auto& rec : series.records) {
    out += g17(rec.t);
    const auto coords = basis.coordinates(rec.coeff);
    for (const double c : coords) append_cell(out, c);
    append_cell(out, rec.moments.mass2);
    for (const double fk : rec.moments.annulus_mass) append_cell(out, fk);
    append_cell(out, rec.integrals.I);
    append_cell(out, rec.integrals.I0);
    append_cell(out, rec.eps);
    append_cell(out, rec.lyap_residual);
    append_cell(out, rec.ode_residual);
    out += "\n";
  }
  return out;
}

void write_series_csv(const std::filesystem::path& path, const ScaleSeries& series) {
  write_text_file(path, render_series_csv(series));
}

std::string render_dissipation_json(const DissipationReport& report) {
  nlohmann::ordered_json j;
  j["schema"] = "dissipation-report-v1";
  j["dimension"] = report.dimension;
  j["mode"] = mode_name(report.mode);
  j["t_start"] = report.t_start;
  j["t_end"] = report.t_end;
  j["scale_count"] = report.scale_count;
  j["window_start"] = report.T;
  j["integral_F"] = report.integral_F;
  j["tail_estimate"] = report.tail_estimate;
  j["tail_fraction"] = report.tail_fraction;
  j["tail_slope"] = report.tail_slope;
  j["tail_reliable"] = report.tail_reliable;
  j["total_variation"] = report.total_variation;
  j["b_infinity"] = report.b_infinity;
  j["b_uncertainty"] = report.b_uncertainty;
  j["eta"] = report.eta;
  j["mu"] = report.mu;
  j["taylor_sup"] = report.taylor_sup;
  nlohmann::ordered_json margins;
  margins["max_trace_error"] = report.max_trace_error;
  margins["min_derivative_margin"] = report.min_derivative_margin;
  margins["max_partition_error"] = report.max_partition_error;
  if (report.i0_checked)
    margins["i0_min_margin"] = report.i0_min_margin;
  else
    margins["i0_min_margin"] = nullptr;
  if (report.volterra_checked)
    margins["volterra_margin"] = report.volterra_margin;
  else
    margins["volterra_margin"] = nullptr;
  j["margins"] = margins;
  j["notes"] = report.notes;
  return j.dump(2) + "\n";
}

void write_dissipation_json(const std::filesystem::path& path, const DissipationReport& report) {
  write_text_file(path, render_dissipation_json(report));
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (!path.parent_path().empty()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace blowup
