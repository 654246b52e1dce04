#pragma once

// Output: legacy ASCII VTK unstructured grids, CSV tables, JSON run reports.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fospg/analysis.hpp"
#include "fospg/assembly.hpp"
#include "fospg/error.hpp"
#include "fospg/latent.hpp"
#include "fospg/solver.hpp"

namespace fospg {

/// Fixed-format number for deterministic text output.
inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10e", x);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> integer_columns;

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        const bool integer = std::find(integer_columns.begin(), integer_columns.end(), i) != integer_columns.end();
        out += (i ? "," : "") + (integer ? std::to_string(std::llround(r[i])) : format_number(r[i]));
      }
      out += "\n";
    }
    return out;
  }
  void write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << str();
  }
};

inline const char* convergence_header() { return "h,err_u,rate_u,err_latent,rate_latent,err_flux,rate_flux"; }

/// Convergence table; the first row has no coarser mesh and reports rate 0.
inline CsvTable convergence_table(const std::vector<ErrorRecord>& recs) {
  CsvTable t;
  t.header = {"h", "err_u", "rate_u", "err_latent", "rate_latent", "err_flux", "rate_flux"};
  auto finite = [](double x) { return std::isfinite(x) ? x : 0.0; };
  for (const auto& r : recs)
    t.rows.push_back({r.h, r.err_u, finite(r.rate_u), r.err_latent, finite(r.rate_latent), r.err_flux,
                      finite(r.rate_flux)});
  return t;
}

/// Fields of a converged state as a legacy VTK unstructured grid. For p = 0
/// every field is CELL_DATA; otherwise fields are sampled at vertices as the
/// average over adjacent cells (POINT_DATA). The mass indicator is per cell.
inline std::string vtk_string(const Discretization& d, const LatentOperator& op, const ProximalState& s,
                              const ScalarFn& f, const std::string& title) {
  const Mesh& mesh = d.mesh();
  const int nv = mesh.verts_per_cell();
  const bool cellwise = d.degree() == 0;
  std::string o;
  o += "# vtk DataFile Version 3.0\n";
  o += title + (cellwise ? " (cell values)" : " (vertex values averaged over adjacent cells)") + "\n";
  o += "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  o += "POINTS " + std::to_string(mesh.num_vertices()) + " double\n";
  for (const Point& p : mesh.vertices()) o += format_number(p.x) + " " + format_number(p.y) + " 0\n";
  o += "CELLS " + std::to_string(mesh.num_cells()) + " " + std::to_string(mesh.num_cells() * (nv + 1)) + "\n";
  for (const auto& c : mesh.cells()) {
    o += std::to_string(nv);
    for (int k = 0; k < nv; ++k) o += " " + std::to_string(c[k]);
    o += "\n";
  }
  o += "CELL_TYPES " + std::to_string(mesh.num_cells()) + "\n";
  for (int c = 0; c < mesh.num_cells(); ++c) o += (nv == 3 ? "5\n" : "9\n");

  const auto ref = reference_vertices(mesh.kind());
  const Point centre = cellwise ? latent_rule(mesh.kind(), 0).points[0] : Point{};
  const int n = cellwise ? mesh.num_cells() : mesh.num_vertices();
  std::vector<double> u(n, 0.0), lu(n, 0.0), psi(n, 0.0), cnt(n, 0.0);
  std::vector<Point> q(n, Point{});
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const AffineMap m = mesh.affine_map(c);
    for (int k = 0; k < (cellwise ? 1 : nv); ++k) {
      const Point r = cellwise ? centre : ref[k];
      const int i = cellwise ? c : mesh.cells()[c][k];
      const double z = d.scalar().eval(s.psi, c, r);
      u[i] += d.scalar().eval(s.u, c, r);
      psi[i] += z;
      lu[i] += op.upsilon(m.map(r), z);
      q[i] = q[i] + eval_flux(d, s.q, c, r);
      cnt[i] += 1.0;
    }
  }
  auto scalars = [&](const std::string& name, const std::vector<double>& v) {
    o += "SCALARS " + name + " double 1\nLOOKUP_TABLE default\n";
    for (int i = 0; i < n; ++i) o += format_number(v[i] / cnt[i]) + "\n";
  };
  const MassIndicator xi = mass_indicator(d, s.q, f);
  if (!cellwise) o += "POINT_DATA " + std::to_string(n) + "\n";
  else o += "CELL_DATA " + std::to_string(n) + "\n";
  scalars("latent_u", lu);
  scalars("u", u);
  scalars("psi", psi);
  o += "VECTORS q double\n";
  for (int i = 0; i < n; ++i) o += format_number(q[i].x / cnt[i]) + " " + format_number(q[i].y / cnt[i]) + " 0\n";
  if (!cellwise) o += "CELL_DATA " + std::to_string(mesh.num_cells()) + "\n";
  o += "SCALARS mass_defect double 1\nLOOKUP_TABLE default\n";
  for (int c = 0; c < mesh.num_cells(); ++c) o += format_number(xi.xi[c]) + "\n";
  return o;
}

inline void write_vtk(const std::string& path, const Discretization& d, const LatentOperator& op,
                      const ProximalState& s, const ScalarFn& f, const std::string& title) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << vtk_string(d, op, s, f, title);
}

/// JSON form of a run report; NaN entries become null.
inline nlohmann::ordered_json report_json(const RunReport& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::ordered_json(x) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  j["status"] = r.status;
  j["converged"] = r.converged;
  j["average_property"] = r.average_property;
  j["outer_iterations"] = r.outer_iterations;
  j["newton_iterations"] = r.newton_iterations;
  j["linear_solves"] = r.linear_solves;
  j["sum_alpha"] = num(r.sum_alpha);
  auto& steps = j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : r.steps) {
    nlohmann::ordered_json e;
    e["k"] = s.k;
    e["alpha"] = num(s.alpha);
    e["newton_iterations"] = s.newton_iterations;
    e["linear_solves"] = s.linear_solves;
    e["newton_error"] = num(s.newton_error);
    e["newton_converged"] = s.newton_converged;
    e["du"] = num(s.du);
    e["mass_max"] = num(s.mass_max);
    e["latent_min"] = num(s.latent_min);
    e["latent_max"] = num(s.latent_max);
    e["psi_max"] = num(s.psi_max);
    e["err_u"] = num(s.err_u);
    e["err_latent"] = num(s.err_latent);
    e["err_flux"] = num(s.err_flux);
    steps.push_back(e);
  }
  return j;
}

}  // namespace fospg
