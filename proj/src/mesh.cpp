#include "mdt/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace mdt {

namespace {

Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Point cross(const Point& a, const Point& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double signed_volume(int dim, const std::vector<Point>& v, const SimplicialMesh::Cell& c) {
  if (dim == 2) {
    const Point a = sub(v[c[1]], v[c[0]]);
    const Point b = sub(v[c[2]], v[c[0]]);
    return 0.5 * (a[0] * b[1] - a[1] * b[0]);
  }
  const Point a = sub(v[c[1]], v[c[0]]);
  const Point b = sub(v[c[2]], v[c[0]]);
  const Point d = sub(v[c[3]], v[c[0]]);
  return dot(a, cross(b, d)) / 6.0;
}

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

using FacetKey = std::array<int, 3>;

FacetKey facet_key(int dim, std::array<int, 3> v) {
  if (dim == 2) {
    v[2] = -1;
    if (v[0] > v[1]) std::swap(v[0], v[1]);
    return v;
  }
  std::sort(v.begin(), v.end());
  return v;
}

BoundaryTag parse_tag(const std::string& s) {
  if (s == "inflow") return BoundaryTag::Inflow;
  if (s == "outflow") return BoundaryTag::Outflow;
  if (s == "wall") return BoundaryTag::Wall;
  throw std::invalid_argument("unknown boundary tag '" + s + "'");
}

}  // namespace

const char* to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Inflow: return "inflow";
    case BoundaryTag::Outflow: return "outflow";
    case BoundaryTag::Wall: return "wall";
  }
  return "wall";
}

SimplicialMesh::SimplicialMesh(int dim, std::vector<Point> vertices, std::vector<Cell> cells,
                               std::vector<BoundaryFacet> boundary, int refinement_level)
    : dim_(dim),
      level_(refinement_level),
      vertices_(std::move(vertices)),
      cells_(std::move(cells)),
      boundary_(std::move(boundary)) {
  if (dim_ != 2 && dim_ != 3) throw std::invalid_argument("mesh dimension must be 2 or 3");
  if (level_ < 0) throw std::invalid_argument("refinement level must be non-negative");
  const int nv = static_cast<int>(vertices_.size());
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    for (int i = 0; i <= dim_; ++i) {
      if (cells_[c][i] < 0 || cells_[c][i] >= nv)
        throw MeshGenerationError("cell references a missing vertex", static_cast<int>(c));
    }
    if (dim_ == 2) cells_[c][3] = -1;
  }
  orient_cells();
  build_edges();
  attach_boundary();
}

std::array<int, 2> SimplicialMesh::local_edge(int dim, int k) {
  static constexpr std::array<std::array<int, 2>, 3> e2{{{0, 1}, {1, 2}, {0, 2}}};
  static constexpr std::array<std::array<int, 2>, 6> e3{
      {{0, 1}, {1, 2}, {0, 2}, {0, 3}, {1, 3}, {2, 3}}};
  return dim == 2 ? e2[k] : e3[k];
}

void SimplicialMesh::orient_cells() {
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    double vol = signed_volume(dim_, vertices_, cells_[c]);
    if (vol < 0) {
      std::swap(cells_[c][0], cells_[c][1]);
      vol = -vol;
    }
    // Degeneracy is judged relative to the cell's own edge length scale.
    double len = 0.0;
    for (int i = 0; i <= dim_; ++i)
      for (int j = i + 1; j <= dim_; ++j) {
        const Point d = sub(vertices_[cells_[c][i]], vertices_[cells_[c][j]]);
        len = std::max(len, std::sqrt(dot(d, d)));
      }
    if (!(vol > 1e-12 * std::pow(len, dim_)))
      throw MeshGenerationError("degenerate cell " + std::to_string(c), static_cast<int>(c));
  }
}

void SimplicialMesh::build_edges() {
  std::unordered_map<std::uint64_t, int> ids;
  ids.reserve(cells_.size() * 2);
  cell_edges_.assign(cells_.size(), std::array<int, 6>{-1, -1, -1, -1, -1, -1});
  const int ne = edges_per_cell(dim_);
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    for (int k = 0; k < ne; ++k) {
      const auto le = local_edge(dim_, k);
      const int a = cells_[c][le[0]];
      const int b = cells_[c][le[1]];
      auto [it, inserted] = ids.try_emplace(edge_key(a, b), static_cast<int>(edges_.size()));
      if (inserted) edges_.push_back({std::min(a, b), std::max(a, b)});
      cell_edges_[c][k] = it->second;
    }
  }
}

void SimplicialMesh::attach_boundary() {
  struct Entry {
    FacetKey key;
    int cell;
    int opposite;
  };
  std::vector<Entry> all;
  all.reserve(cells_.size() * (dim_ + 1));
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    for (int l = 0; l <= dim_; ++l) {
      std::array<int, 3> v{-1, -1, -1};
      int n = 0;
      for (int i = 0; i <= dim_; ++i)
        if (i != l) v[n++] = cells_[c][i];
      all.push_back({facet_key(dim_, v), static_cast<int>(c), l});
    }
  }
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    return a.key != b.key ? a.key < b.key : a.cell < b.cell;
  });
  for (std::size_t i = 0; i + 2 < all.size(); ++i) {
    if (all[i].key == all[i + 2].key)
      throw MeshGenerationError("facet shared by more than two cells", all[i].cell);
  }
  facet_cell_.resize(boundary_.size());
  facet_opposite_.resize(boundary_.size());
  for (std::size_t f = 0; f < boundary_.size(); ++f) {
    const FacetKey key = facet_key(dim_, boundary_[f].vertices);
    auto lo = std::lower_bound(all.begin(), all.end(), key,
                               [](const Entry& e, const FacetKey& k) { return e.key < k; });
    auto hi = lo;
    while (hi != all.end() && hi->key == key) ++hi;
    if (hi - lo != 1)
      throw MeshGenerationError("boundary facet " + std::to_string(f) + " is owned by " +
                                    std::to_string(hi - lo) + " cells",
                                lo == all.end() ? -1 : lo->cell);
    facet_cell_[f] = lo->cell;
    facet_opposite_[f] = lo->opposite;
  }
  std::size_t exterior = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].key == all[i].key) ++j;
    if (j - i == 1) ++exterior;
    i = j;
  }
  if (exterior != boundary_.size())
    throw MeshGenerationError("boundary facets do not cover the mesh boundary exactly once", -1);
}

double SimplicialMesh::cell_volume(std::size_t c) const {
  return signed_volume(dim_, vertices_, cells_[c]);
}

double SimplicialMesh::total_volume() const {
  double v = 0.0;
  for (std::size_t c = 0; c < cells_.size(); ++c) v += cell_volume(c);
  return v;
}

Point SimplicialMesh::facet_normal(std::size_t f) const {
  const auto& fv = boundary_[f].vertices;
  const Point& opp = vertices_[cells_[facet_cell_[f]][facet_opposite_[f]]];
  Point n;
  if (dim_ == 2) {
    const Point t = sub(vertices_[fv[1]], vertices_[fv[0]]);
    n = {t[1], -t[0], 0.0};
  } else {
    n = cross(sub(vertices_[fv[1]], vertices_[fv[0]]), sub(vertices_[fv[2]], vertices_[fv[0]]));
  }
  if (dot(n, sub(opp, vertices_[fv[0]])) > 0) n = {-n[0], -n[1], -n[2]};
  const double len = std::sqrt(dot(n, n));
  return {n[0] / len, n[1] / len, n[2] / len};
}

double SimplicialMesh::facet_measure(std::size_t f) const {
  const auto& fv = boundary_[f].vertices;
  if (dim_ == 2) {
    const Point t = sub(vertices_[fv[1]], vertices_[fv[0]]);
    return std::sqrt(dot(t, t));
  }
  const Point n =
      cross(sub(vertices_[fv[1]], vertices_[fv[0]]), sub(vertices_[fv[2]], vertices_[fv[0]]));
  return 0.5 * std::sqrt(dot(n, n));
}

SimplicialMesh build_channel_2d(double length, double height, int nx, int ny) {
  if (!(length > 0) || !(height > 0))
    throw std::invalid_argument("channel dimensions must be positive");
  if (nx < 1 || ny < 1) throw std::invalid_argument("channel subdivisions must be >= 1");

  std::vector<Point> verts;
  verts.reserve((nx + 1) * (ny + 1) + nx * ny);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) verts.push_back({length * i / nx, height * j / ny, 0.0});
  const int center0 = static_cast<int>(verts.size());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      verts.push_back({length * (i + 0.5) / nx, height * (j + 0.5) / ny, 0.0});

  auto grid = [nx](int i, int j) { return j * (nx + 1) + i; };
  std::vector<SimplicialMesh::Cell> cells;
  cells.reserve(4 * nx * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int c = center0 + j * nx + i;
      const int v00 = grid(i, j), v10 = grid(i + 1, j), v11 = grid(i + 1, j + 1),
                v01 = grid(i, j + 1);
      cells.push_back({v00, v10, c, -1});
      cells.push_back({v10, v11, c, -1});
      cells.push_back({v11, v01, c, -1});
      cells.push_back({v01, v00, c, -1});
    }
  }

  std::vector<BoundaryFacet> boundary;
  for (int i = 0; i < nx; ++i) {
    boundary.push_back({{grid(i, 0), grid(i + 1, 0), -1}, BoundaryTag::Wall});
    boundary.push_back({{grid(i + 1, ny), grid(i, ny), -1}, BoundaryTag::Wall});
  }
  for (int j = 0; j < ny; ++j) {
    boundary.push_back({{grid(0, j + 1), grid(0, j), -1}, BoundaryTag::Inflow});
    boundary.push_back({{grid(nx, j), grid(nx, j + 1), -1}, BoundaryTag::Outflow});
  }
  return SimplicialMesh(2, std::move(verts), std::move(cells), std::move(boundary));
}

SimplicialMesh build_pipe_3d(double radius, double length, double target_h) {
  if (!(radius > 0) || !(length > 0) || !(target_h > 0))
    throw std::invalid_argument("pipe radius, length and target_h must be positive");

  constexpr double cy = 0.5, cz = 0.5;
  const int nr = std::max(1, static_cast<int>(std::ceil(radius / target_h - 1e-12)));
  const int nl = std::max(1, static_cast<int>(std::ceil(length / target_h - 1e-12)));

  // Cross-section: hexagonal ring triangulation, ring k carries 6k points at
  // radius k/nr.
  const int nd = 1 + 3 * nr * (nr + 1);
  std::vector<std::array<double, 2>> disk(nd);
  disk[0] = {cy, cz};
  auto ring_index = [](int k, int s, int j) {
    if (k == 0) return 0;
    return 1 + 3 * k * (k - 1) + (s * k + j) % (6 * k);
  };
  for (int k = 1; k <= nr; ++k) {
    const double r = radius * k / nr;
    for (int i = 0; i < 6 * k; ++i) {
      const double theta = 2.0 * std::numbers::pi * i / (6 * k);
      disk[1 + 3 * k * (k - 1) + i] = {cy + r * std::cos(theta), cz + r * std::sin(theta)};
    }
  }
  std::vector<std::array<int, 3>> tris;
  for (int k = 1; k <= nr; ++k) {
    for (int s = 0; s < 6; ++s) {
      for (int j = 0; j < k; ++j)
        tris.push_back({ring_index(k, s, j), ring_index(k, s, j + 1), ring_index(k - 1, s, j)});
      for (int j = 0; j + 1 < k; ++j)
        tris.push_back(
            {ring_index(k - 1, s, j), ring_index(k, s, j + 1), ring_index(k - 1, s, j + 1)});
    }
  }

  std::vector<Point> verts;
  verts.reserve(static_cast<std::size_t>(nd) * (nl + 1));
  for (int l = 0; l <= nl; ++l)
    for (int d = 0; d < nd; ++d) verts.push_back({length * l / nl, disk[d][0], disk[d][1]});

  // Prisms are split into 3 tets; every quad face is cut along the diagonal
  // through its smallest vertex index, which keeps neighbouring prisms conforming.
  std::vector<SimplicialMesh::Cell> cells;
  cells.reserve(tris.size() * 3 * nl);
  for (int l = 0; l < nl; ++l) {
    const int off = l * nd;
    for (const auto& t : tris) {
      std::array<int, 3> b{t[0] + off, t[1] + off, t[2] + off};
      std::sort(b.begin(), b.end());
      const int a = b[0], bb = b[1], c = b[2];
      const int ta = a + nd, tb = bb + nd, tc = c + nd;
      cells.push_back({a, bb, c, tc});
      cells.push_back({a, bb, tb, tc});
      cells.push_back({a, ta, tb, tc});
    }
  }

  std::vector<BoundaryFacet> boundary;
  for (const auto& t : tris) {
    boundary.push_back({{t[0], t[1], t[2]}, BoundaryTag::Inflow});
    boundary.push_back({{t[0] + nl * nd, t[1] + nl * nd, t[2] + nl * nd}, BoundaryTag::Outflow});
  }
  const int rim0 = 1 + 3 * nr * (nr - 1);
  for (int l = 0; l < nl; ++l) {
    const int off = l * nd;
    for (int i = 0; i < 6 * nr; ++i) {
      int vi = rim0 + i + off;
      int vj = rim0 + (i + 1) % (6 * nr) + off;
      if (vi > vj) std::swap(vi, vj);
      boundary.push_back({{vi, vj, vj + nd}, BoundaryTag::Wall});
      boundary.push_back({{vi, vj + nd, vi + nd}, BoundaryTag::Wall});
    }
  }
  return SimplicialMesh(3, std::move(verts), std::move(cells), std::move(boundary));
}

SimplicialMesh refine_uniform(const SimplicialMesh& mesh) {
  const int dim = mesh.dim();
  const int nv = static_cast<int>(mesh.n_vertices());
  std::vector<Point> verts = mesh.vertices();
  verts.reserve(nv + mesh.n_edges());
  for (const auto& e : mesh.edges()) {
    const Point& a = mesh.vertex(e[0]);
    const Point& b = mesh.vertex(e[1]);
    verts.push_back({0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])});
  }

  std::vector<SimplicialMesh::Cell> cells;
  cells.reserve(mesh.n_cells() * (dim == 2 ? 4 : 8));
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    const auto& v = mesh.cell(c);
    const auto& ce = mesh.cell_edges(c);
    if (dim == 2) {
      const int m01 = nv + ce[0], m12 = nv + ce[1], m02 = nv + ce[2];
      cells.push_back({v[0], m01, m02, -1});
      cells.push_back({v[1], m12, m01, -1});
      cells.push_back({v[2], m02, m12, -1});
      cells.push_back({m01, m12, m02, -1});
    } else {
      const int m01 = nv + ce[0], m12 = nv + ce[1], m02 = nv + ce[2], m03 = nv + ce[3],
                m13 = nv + ce[4], m23 = nv + ce[5];
      cells.push_back({v[0], m01, m02, m03});
      cells.push_back({v[1], m01, m12, m13});
      cells.push_back({v[2], m02, m12, m23});
      cells.push_back({v[3], m03, m13, m23});
      auto dist2 = [&](int a, int b) {
        const Point d = sub(verts[a], verts[b]);
        return dot(d, d);
      };
      const double d0 = dist2(m01, m23), d1 = dist2(m02, m13), d2 = dist2(m03, m12);
      std::array<int, 2> diag;
      std::array<int, 4> ring;
      if (d0 <= d1 && d0 <= d2) {
        diag = {m01, m23};
        ring = {m02, m03, m13, m12};
      } else if (d1 <= d2) {
        diag = {m02, m13};
        ring = {m01, m03, m23, m12};
      } else {
        diag = {m03, m12};
        ring = {m01, m02, m23, m13};
      }
      for (int i = 0; i < 4; ++i) cells.push_back({diag[0], diag[1], ring[i], ring[(i + 1) % 4]});
    }
  }

  std::unordered_map<std::uint64_t, int> edge_id;
  edge_id.reserve(mesh.n_edges());
  for (std::size_t e = 0; e < mesh.n_edges(); ++e)
    edge_id.emplace(edge_key(mesh.edges()[e][0], mesh.edges()[e][1]), static_cast<int>(e));
  auto mid = [&](int a, int b) { return nv + edge_id.at(edge_key(a, b)); };

  std::vector<BoundaryFacet> boundary;
  boundary.reserve(mesh.n_boundary_facets() * (dim == 2 ? 2 : 4));
  for (const auto& f : mesh.boundary_facets()) {
    const auto& v = f.vertices;
    if (dim == 2) {
      const int m = mid(v[0], v[1]);
      boundary.push_back({{v[0], m, -1}, f.tag});
      boundary.push_back({{m, v[1], -1}, f.tag});
    } else {
      const int mab = mid(v[0], v[1]), mbc = mid(v[1], v[2]), mac = mid(v[0], v[2]);
      boundary.push_back({{v[0], mab, mac}, f.tag});
      boundary.push_back({{v[1], mbc, mab}, f.tag});
      boundary.push_back({{v[2], mac, mbc}, f.tag});
      boundary.push_back({{mab, mbc, mac}, f.tag});
    }
  }
  return SimplicialMesh(dim, std::move(verts), std::move(cells), std::move(boundary),
                        mesh.refinement_level() + 1);
}

double cell_diameter_h(const SimplicialMesh& mesh, std::size_t cell) {
  if (cell >= mesh.n_cells()) throw std::out_of_range("cell index out of range");
  const double vol = mesh.cell_volume(cell);
  return mesh.dim() == 2 ? std::sqrt(vol) : std::cbrt(vol);
}

void write_mesh(std::ostream& out, const SimplicialMesh& mesh) {
  const int dim = mesh.dim();
  out << "simplicial-mesh " << dim << "\n"
      << mesh.n_vertices() << " " << mesh.n_cells() << " " << mesh.n_boundary_facets() << "\n";
  out << std::setprecision(17);
  for (const auto& p : mesh.vertices()) {
    for (int d = 0; d < dim; ++d) out << (d ? " " : "") << p[d];
    out << "\n";
  }
  for (const auto& c : mesh.cells()) {
    for (int i = 0; i <= dim; ++i) out << (i ? " " : "") << c[i];
    out << "\n";
  }
  for (const auto& f : mesh.boundary_facets()) {
    for (int i = 0; i < dim; ++i) out << f.vertices[i] << " ";
    out << to_string(f.tag) << "\n";
  }
}

SimplicialMesh read_mesh(std::istream& in) {
  std::string magic;
  int dim = 0;
  if (!(in >> magic >> dim) || magic != "simplicial-mesh")
    throw std::invalid_argument("not a simplicial-mesh file");
  if (dim != 2 && dim != 3) throw std::invalid_argument("mesh dimension must be 2 or 3");
  std::size_t nv = 0, nc = 0, nb = 0;
  if (!(in >> nv >> nc >> nb)) throw std::invalid_argument("malformed mesh header");
  std::vector<Point> verts(nv, Point{0, 0, 0});
  for (auto& p : verts)
    for (int d = 0; d < dim; ++d)
      if (!(in >> p[d])) throw std::invalid_argument("malformed vertex record");
  std::vector<SimplicialMesh::Cell> cells(nc, SimplicialMesh::Cell{-1, -1, -1, -1});
  for (auto& c : cells)
    for (int i = 0; i <= dim; ++i)
      if (!(in >> c[i])) throw std::invalid_argument("malformed cell record");
  std::vector<BoundaryFacet> boundary(nb);
  for (auto& f : boundary) {
    for (int i = 0; i < dim; ++i)
      if (!(in >> f.vertices[i])) throw std::invalid_argument("malformed boundary record");
    std::string tag;
    if (!(in >> tag)) throw std::invalid_argument("malformed boundary record");
    f.tag = parse_tag(tag);
  }
  return SimplicialMesh(dim, std::move(verts), std::move(cells), std::move(boundary));
}

}  // namespace mdt
