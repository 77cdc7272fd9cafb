#pragma once

#include <filesystem>
#include <string>

#include "blowup/dynamics.hpp"

namespace blowup {

// Shortest exact decimal form that round-trips a double; the one number
// format used in every deterministic artifact.
std::string g17(double v);

// One row per scale: t, the basis coordinates of B(t), F, F_0..F_{k_max},
// I, I_0, eps, and the Lyapunov / ODE residual columns (empty when unset).
// The first line is a versioned schema comment.
std::string render_series_csv(const ScaleSeries& series);
void write_series_csv(const std::filesystem::path& path, const ScaleSeries& series);

std::string render_dissipation_json(const DissipationReport& report);
void write_dissipation_json(const std::filesystem::path& path, const DissipationReport& report);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace blowup
