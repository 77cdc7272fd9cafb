#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "blowup/config.hpp"
#include "blowup/dynamics.hpp"
#include "blowup/errors.hpp"
#include "blowup/fields.hpp"
#include "blowup/harmonics.hpp"
#include "blowup/runner.hpp"
#include "blowup/verification.hpp"

namespace py = pybind11;

namespace {

std::vector<std::vector<double>> rows(const blowup::SymMat& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.dim()));
  for (int i = 0; i < m.dim(); ++i) {
    out[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(m.dim()));
    for (int j = 0; j < m.dim(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  }
  return out;
}

blowup::PatchConfig make_patches(int dimension,
                                 const std::vector<std::pair<std::vector<double>, double>>& balls) {
  blowup::PatchConfig pc;
  pc.dimension = dimension;
  pc.seed = blowup::TraceFreeSym(dimension);
  for (const auto& [center, radius] : balls) pc.patches.push_back({center, radius});
  pc.validate();
  return pc;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "free-boundary rescaling laboratory: projections, moment flows, grid solves";

  m.def("sphere_area", &blowup::sphere_area, py::arg("dimension"));
  m.def("ball_volume", &blowup::ball_volume, py::arg("dimension"));
  m.def("gram_constant", &blowup::gram_constant, py::arg("dimension"));
  m.def("kappa", &blowup::kappa, py::arg("dimension"));

  m.def(
      "sphere_nodes",
      [](int dimension) {
        const auto quad = blowup::SphereQuadrature::standard(dimension);
        std::vector<std::vector<double>> nodes(quad.size());
        for (std::size_t i = 0; i < quad.size(); ++i) {
          const auto node = quad.node(i);
          nodes[i].assign(node.begin(), node.end());
        }
        return nodes;
      },
      py::arg("dimension"),
      "Quadrature nodes on the unit sphere; `project` expects one sample per node.");

  m.def(
      "project",
      [](const std::vector<double>& samples, int dimension) {
        const blowup::HarmonicBasis basis(dimension);
        const auto quad = blowup::SphereQuadrature::standard(dimension);
        if (samples.size() != quad.size())
          throw blowup::InvalidArgument("project: expected one sample per quadrature node");
        return rows(blowup::project(samples, basis, quad).matrix());
      },
      py::arg("samples"), py::arg("dimension"),
      "L2 projection of sphere samples onto the trace-free quadratic harmonics.");

  m.def(
      "synthetic_moments",
      [](const std::vector<std::pair<std::vector<double>, double>>& balls, int dimension,
         double t) {
        const auto field = blowup::build_synthetic(make_patches(dimension, balls));
        const blowup::IntegrationSpec spec;
        const auto data = blowup::compute_moments(*field, t, spec, 0);
        py::dict out;
        out["second_moment"] = rows(data.second_moment);
        out["mass2"] = data.mass2;
        // Only the full-ball moments are reported, so the flag describes
        // those; a sampled dyadic split elsewhere does not touch them.
        out["closed_form"] = data.totals_closed;
        return out;
      },
      py::arg("balls"), py::arg("dimension") = 2, py::arg("t") = 0.0,
      "Second moment and weighted mass of a dilated ball family inside the unit ball.");

  m.def(
      "center_velocity",
      [](const std::vector<std::pair<std::vector<double>, double>>& balls, int dimension,
         double t) {
        const auto field = blowup::build_synthetic(make_patches(dimension, balls));
        const blowup::IntegrationSpec spec;
        const auto data = blowup::compute_moments(*field, t, spec, 0);
        return rows(blowup::ode_rhs(data.second_moment).matrix());
      },
      py::arg("balls"), py::arg("dimension") = 2, py::arg("t") = 0.0,
      "Right-hand side kappa_n tf(M) of the center ODE for a synthetic family.");

  m.def(
      "run_json",
      [](const std::string& config_text) {
        const auto cfg = blowup::parse_run_config(config_text, "<python>");
        cfg.validate();
        const auto report = blowup::run(cfg);
        py::dict out;
        out["ok"] = report.ok;
        out["table"] = blowup::render_run_table(report);
        out["artifacts"] = report.artifacts;
        return out;
      },
      py::arg("config_text"),
      "Full pipeline on a JSON run configuration; writes the configured artifacts.");

  m.def(
      "verify",
      [](const std::string& out_dir, int k_max) {
        blowup::VerifyOptions opt;
        opt.out_dir = out_dir;
        opt.k_max = k_max;
        const auto report = blowup::run_verification(opt);
        return py::make_tuple(report.ok, blowup::render_verify_table(report));
      },
      py::arg("out_dir") = "verify-out", py::arg("k_max") = 8,
      "Full identity-check matrix; several grid solves, takes tens of seconds.");
}
