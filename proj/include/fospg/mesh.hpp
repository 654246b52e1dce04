#pragma once

// Conforming affine 2D meshes (triangles, axis-aligned rectangles) with facet
// connectivity, region tags and boundary markers, plus structured generators
// for the benchmark domains.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fospg/error.hpp"

namespace fospg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }

enum class CellKind { triangle, rectangle };

inline int vertices_per_cell(CellKind kind) { return kind == CellKind::triangle ? 3 : 4; }
inline int facets_per_cell(CellKind kind) { return vertices_per_cell(kind); }

/// Boundary markers carried by facets.
enum BoundaryMarker : int { interior_facet = 0, outer_boundary = 1, hole_boundary = 2 };

/// x = b + J x_hat on one cell; J maps the reference cell (unit triangle or
/// unit square) onto the physical cell.
struct AffineMap {
  std::array<double, 4> jac{};  // row-major 2x2
  Point shift;
  double det = 0.0;

  Point map(Point ref) const {
    return {shift.x + jac[0] * ref.x + jac[1] * ref.y, shift.y + jac[2] * ref.x + jac[3] * ref.y};
  }
  Point inverse(Point phys) const {
    const Point d = phys - shift;
    return {(jac[3] * d.x - jac[1] * d.y) / det, (-jac[2] * d.x + jac[0] * d.y) / det};
  }
  /// J^{-T} g, used to push reference gradients forward.
  Point inverse_transpose(Point g) const {
    return {(jac[3] * g.x - jac[2] * g.y) / det, (-jac[1] * g.x + jac[0] * g.y) / det};
  }
  /// Contravariant Piola transform of a reference vector: J v / det J.
  Point piola(Point v) const {
    return {(jac[0] * v.x + jac[1] * v.y) / det, (jac[2] * v.x + jac[3] * v.y) / det};
  }
};

/// Facet (edge) record. Vertices are stored in the owner's counterclockwise
/// traversal order, so the unit normal points from owner to neighbor.
struct Facet {
  std::array<int, 2> v{};
  int owner = -1;
  int neighbor = -1;  // -1 on the boundary
  int owner_local = -1;
  int neighbor_local = -1;
  int marker = interior_facet;
  Point normal;
  double length = 0.0;

  bool on_boundary() const { return neighbor < 0; }
};

class Mesh {
 public:
  using CellVertices = std::array<int, 4>;

  Mesh() = default;

  /// Builds the facet table and validates orientation. Throws on inverted,
  /// degenerate or duplicated cells and on non-manifold edges.
  static Mesh from_cells(CellKind kind, std::vector<Point> vertices, std::vector<CellVertices> cells,
                         std::vector<int> regions = {});

  CellKind kind() const { return kind_; }
  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_cells() const { return static_cast<int>(cells_.size()); }
  int num_facets() const { return static_cast<int>(facets_.size()); }
  int verts_per_cell() const { return vertices_per_cell(kind_); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<CellVertices>& cells() const { return cells_; }
  const std::vector<Facet>& facets() const { return facets_; }
  const Facet& facet(int f) const { return facets_[f]; }
  Point vertex(int i) const { return vertices_[i]; }
  int region(int cell) const { return regions_[cell]; }
  const std::vector<int>& regions() const { return regions_; }
  /// Global facet index of local facet k of a cell.
  int cell_facet(int cell, int k) const { return cell_facets_[cell][k]; }
  /// Local facet k of a cell runs from local vertex k to local vertex k+1.
  std::array<int, 2> local_facet_vertices(int cell, int k) const {
    const int nv = verts_per_cell();
    return {cells_[cell][k], cells_[cell][(k + 1) % nv]};
  }
  bool is_owner(int cell, int k) const { return facets_[cell_facets_[cell][k]].owner == cell; }

  AffineMap affine_map(int cell) const;
  double cell_area(int cell) const;
  double cell_diameter(int cell) const;
  Point centroid(int cell) const;
  /// Maximum cell diameter.
  double mesh_size() const;
  int num_boundary_facets() const;

  void set_regions(std::vector<int> regions);
  /// Reassigns boundary markers using a predicate on facet midpoints.
  void mark_boundary(const std::function<int(Point)>& marker_of_midpoint);

 private:
  void build_facets();

  CellKind kind_ = CellKind::triangle;
  std::vector<Point> vertices_;
  std::vector<CellVertices> cells_;
  std::vector<int> regions_;
  std::vector<Facet> facets_;
  std::vector<std::array<int, 4>> cell_facets_;
};

// ---------------------------------------------------------------------------

inline AffineMap Mesh::affine_map(int cell) const {
  const auto& c = cells_[cell];
  const Point p0 = vertices_[c[0]];
  const Point e1 = vertices_[c[1]] - p0;
  const Point e2 = kind_ == CellKind::triangle ? vertices_[c[2]] - p0 : vertices_[c[3]] - p0;
  AffineMap m;
  m.jac = {e1.x, e2.x, e1.y, e2.y};
  m.shift = p0;
  m.det = cross(e1, e2);
  if (!(m.det > 0.0)) throw MeshError("singular or inverted affine map on cell " + std::to_string(cell));
  return m;
}

inline double Mesh::cell_area(int cell) const {
  const double det = affine_map(cell).det;
  return kind_ == CellKind::triangle ? 0.5 * det : det;
}

inline double Mesh::cell_diameter(int cell) const {
  double d = 0.0;
  const int nv = verts_per_cell();
  for (int i = 0; i < nv; ++i)
    for (int j = i + 1; j < nv; ++j)
      d = std::max(d, norm(vertices_[cells_[cell][i]] - vertices_[cells_[cell][j]]));
  return d;
}

inline Point Mesh::centroid(int cell) const {
  Point c;
  const int nv = verts_per_cell();
  for (int i = 0; i < nv; ++i) c = c + vertices_[cells_[cell][i]];
  return (1.0 / nv) * c;
}

inline double Mesh::mesh_size() const {
  double h = 0.0;
  for (int c = 0; c < num_cells(); ++c) h = std::max(h, cell_diameter(c));
  return h;
}

inline int Mesh::num_boundary_facets() const {
  return static_cast<int>(std::count_if(facets_.begin(), facets_.end(), [](const Facet& f) { return f.on_boundary(); }));
}

inline void Mesh::set_regions(std::vector<int> regions) {
  if (regions.size() != cells_.size()) throw MeshError("region tag count does not match cell count");
  regions_ = std::move(regions);
}

inline void Mesh::mark_boundary(const std::function<int(Point)>& marker_of_midpoint) {
  for (auto& f : facets_) {
    if (!f.on_boundary()) continue;
    f.marker = marker_of_midpoint(0.5 * (vertices_[f.v[0]] + vertices_[f.v[1]]));
  }
}

inline Mesh Mesh::from_cells(CellKind kind, std::vector<Point> vertices, std::vector<CellVertices> cells,
                             std::vector<int> regions) {
  Mesh m;
  m.kind_ = kind;
  m.vertices_ = std::move(vertices);
  m.cells_ = std::move(cells);
  m.regions_ = regions.empty() ? std::vector<int>(m.cells_.size(), 0) : std::move(regions);
  if (m.regions_.size() != m.cells_.size()) throw MeshError("region tag count does not match cell count");

  const int nv = m.verts_per_cell();
  std::map<std::vector<int>, int> seen;
  for (int c = 0; c < m.num_cells(); ++c) {
    std::vector<int> key(m.cells_[c].begin(), m.cells_[c].begin() + nv);
    for (int v : key)
      if (v < 0 || v >= m.num_vertices()) throw MeshError("cell references a missing vertex");
    std::sort(key.begin(), key.end());
    if (std::adjacent_find(key.begin(), key.end()) != key.end()) throw MeshError("cell repeats a vertex");
    if (!seen.emplace(key, c).second) throw MeshError("duplicate cell " + std::to_string(c));
    (void)m.affine_map(c);  // throws on inverted cells
    if (kind == CellKind::rectangle) {
      const auto& v = m.cells_[c];
      const Point defect = m.vertices_[v[2]] - (m.vertices_[v[1]] + m.vertices_[v[3]] - m.vertices_[v[0]]);
      if (norm(defect) > 1e-12 * m.cell_diameter(c)) throw MeshError("quadrilateral cell is not a parallelogram");
    }
  }
  m.build_facets();
  return m;
}

inline void Mesh::build_facets() {
  const int nv = verts_per_cell();
  std::map<std::pair<int, int>, int> index;
  facets_.clear();
  cell_facets_.assign(cells_.size(), {-1, -1, -1, -1});
  for (int c = 0; c < num_cells(); ++c) {
    for (int k = 0; k < nv; ++k) {
      const auto [a, b] = local_facet_vertices(c, k);
      const auto key = std::minmax(a, b);
      auto it = index.find(key);
      if (it == index.end()) {
        Facet f;
        f.v = {a, b};
        f.owner = c;
        f.owner_local = k;
        const Point t = vertices_[b] - vertices_[a];
        f.length = norm(t);
        f.normal = {t.y / f.length, -t.x / f.length};
        f.marker = outer_boundary;
        index.emplace(key, num_facets());
        cell_facets_[c][k] = num_facets();
        facets_.push_back(f);
      } else {
        Facet& f = facets_[it->second];
        if (f.neighbor >= 0) throw MeshError("edge shared by more than two cells");
        if (f.v[0] != b || f.v[1] != a) throw MeshError("inconsistent cell orientation across an edge");
        f.neighbor = c;
        f.neighbor_local = k;
        f.marker = interior_facet;
        cell_facets_[c][k] = it->second;
      }
    }
  }
}

// --- generators -------------------------------------------------------------

/// n x n cells on [x0,x1] x [y0,y1], each split along the same diagonal.
inline Mesh box_triangles(int n, double x0, double x1, double y0, double y1) {
  if (n < 1) throw MeshError("mesh resolution must be positive");
  std::vector<Point> verts;
  verts.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      verts.push_back({x0 + (x1 - x0) * i / n, y0 + (y1 - y0) * j / n});
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<Mesh::CellVertices> cells;
  cells.reserve(2 * n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      cells.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), -1});
      cells.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1), -1});
    }
  return Mesh::from_cells(CellKind::triangle, std::move(verts), std::move(cells));
}

inline Mesh unit_square_triangles(int n) { return box_triangles(n, 0.0, 1.0, 0.0, 1.0); }

inline Mesh box_rectangles(int n, double x0, double x1, double y0, double y1) {
  if (n < 1) throw MeshError("mesh resolution must be positive");
  std::vector<Point> verts;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      verts.push_back({x0 + (x1 - x0) * i / n, y0 + (y1 - y0) * j / n});
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  std::vector<Mesh::CellVertices> cells;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) cells.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
  return Mesh::from_cells(CellKind::rectangle, std::move(verts), std::move(cells));
}

inline Mesh unit_square_rectangles(int n) { return box_rectangles(n, 0.0, 1.0, 0.0, 1.0); }

/// Unit square minus the hole (4/9,5/9)^2. Hole facets carry hole_boundary.
inline Mesh punctured_square(int n) {
  if (n < 1 || n % 9 != 0) throw MeshError("punctured square needs a resolution divisible by 9");
  const int lo = 4 * n / 9, hi = 5 * n / 9;
  auto in_hole = [&](int i, int j) { return i >= lo && i < hi && j >= lo && j < hi; };
  std::vector<int> renum((n + 1) * (n + 1), -1);
  std::vector<Point> verts;
  auto vid = [&](int i, int j) {
    int& r = renum[j * (n + 1) + i];
    if (r < 0) {
      r = static_cast<int>(verts.size());
      verts.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
    }
    return r;
  };
  std::vector<Mesh::CellVertices> cells;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      if (in_hole(i, j)) continue;
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      cells.push_back({a, b, c, -1});
      cells.push_back({a, c, d, -1});
    }
  Mesh m = Mesh::from_cells(CellKind::triangle, std::move(verts), std::move(cells));
  const double eps = 1e-12;
  m.mark_boundary([eps](Point mid) {
    const bool inside = mid.x > 4.0 / 9 - eps && mid.x < 5.0 / 9 + eps && mid.y > 4.0 / 9 - eps && mid.y < 5.0 / 9 + eps;
    return inside ? hole_boundary : outer_boundary;
  });
  return m;
}

/// Region 1 for the high-permeability strips, 2 elsewhere.
inline int vertical_faults_region(double x, double y) {
  for (int k = 0; k <= 4; ++k) {
    if (x <= 0.5) {
      if (y >= 0.05 + 0.2 * k && y <= 0.15 + 0.2 * k) return 1;
    } else if (y >= 0.2 * k && y <= 0.2 * k + 0.1) {
      return 1;
    }
  }
  return 2;
}

inline Mesh vertical_faults_mesh(int n) {
  if (n < 1 || n % 20 != 0) throw MeshError("vertical faults mesh needs a resolution divisible by 20");
  Mesh m = unit_square_triangles(n);
  std::vector<int> regions(m.num_cells());
  for (int c = 0; c < m.num_cells(); ++c) {
    const Point g = m.centroid(c);
    regions[c] = vertical_faults_region(g.x, g.y);
  }
  m.set_regions(std::move(regions));
  return m;
}

/// Splits every triangle into four. New midpoints on boundary edges are passed
/// through `project_boundary` (identity when empty).
inline Mesh refine_uniform(const Mesh& coarse, const std::function<Point(Point)>& project_boundary = {}) {
  if (coarse.kind() != CellKind::triangle) throw MeshError("uniform refinement implemented for triangles only");
  std::vector<Point> verts = coarse.vertices();
  std::vector<int> mid(coarse.num_facets());
  for (int f = 0; f < coarse.num_facets(); ++f) {
    const Facet& fa = coarse.facet(f);
    Point p = 0.5 * (coarse.vertex(fa.v[0]) + coarse.vertex(fa.v[1]));
    if (fa.on_boundary() && project_boundary) p = project_boundary(p);
    mid[f] = static_cast<int>(verts.size());
    verts.push_back(p);
  }
  std::vector<Mesh::CellVertices> cells;
  std::vector<int> regions;
  for (int c = 0; c < coarse.num_cells(); ++c) {
    const auto& v = coarse.cells()[c];
    // local facet k joins vertex k and k+1
    const int m01 = mid[coarse.cell_facet(c, 0)], m12 = mid[coarse.cell_facet(c, 1)], m20 = mid[coarse.cell_facet(c, 2)];
    cells.push_back({v[0], m01, m20, -1});
    cells.push_back({m01, v[1], m12, -1});
    cells.push_back({m20, m12, v[2], -1});
    cells.push_back({m01, m12, m20, -1});
    for (int i = 0; i < 4; ++i) regions.push_back(coarse.region(c));
  }
  return Mesh::from_cells(CellKind::triangle, std::move(verts), std::move(cells), std::move(regions));
}

/// Fan triangulation of the regular 16-gon inscribed in the unit circle,
/// refined n_refine times with boundary midpoints projected onto the circle.
inline Mesh polygonal_disk(int n_refine) {
  if (n_refine < 0) throw MeshError("refinement count must be nonnegative");
  constexpr int sides = 16;
  std::vector<Point> verts{{0.0, 0.0}};
  for (int k = 0; k < sides; ++k) {
    const double t = 2.0 * std::numbers::pi * k / sides;
    verts.push_back({std::cos(t), std::sin(t)});
  }
  std::vector<Mesh::CellVertices> cells;
  for (int k = 0; k < sides; ++k) cells.push_back({0, 1 + k, 1 + (k + 1) % sides, -1});
  Mesh m = Mesh::from_cells(CellKind::triangle, std::move(verts), std::move(cells));
  const auto project = [](Point p) { return (1.0 / norm(p)) * p; };
  for (int r = 0; r < n_refine; ++r) m = refine_uniform(m, project);
  return m;
}

}  // namespace fospg
