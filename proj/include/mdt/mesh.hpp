#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdt {

using Point = std::array<double, 3>;

enum class BoundaryTag { Inflow, Outflow, Wall };

const char* to_string(BoundaryTag tag);

struct BoundaryFacet {
  std::array<int, 3> vertices{-1, -1, -1};  // first `dim` entries used
  BoundaryTag tag = BoundaryTag::Wall;
};

class MeshGenerationError : public std::runtime_error {
 public:
  MeshGenerationError(const std::string& what, int cell)
      : std::runtime_error(what), cell_(cell) {}
  int cell() const { return cell_; }

 private:
  int cell_;
};

/// Conforming triangle (dim 2) or tetrahedral (dim 3) mesh with tagged
/// boundary facets. Immutable once constructed: the constructor orients
/// cells, builds the edge numbering and attaches every boundary facet to its
/// owning cell.
class SimplicialMesh {
 public:
  using Cell = std::array<int, 4>;  // first dim+1 entries used

  SimplicialMesh(int dim, std::vector<Point> vertices, std::vector<Cell> cells,
                 std::vector<BoundaryFacet> boundary, int refinement_level = 0);

  int dim() const { return dim_; }
  int refinement_level() const { return level_; }
  std::size_t n_vertices() const { return vertices_.size(); }
  std::size_t n_cells() const { return cells_.size(); }
  std::size_t n_edges() const { return edges_.size(); }
  std::size_t n_boundary_facets() const { return boundary_.size(); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const Point& vertex(int i) const { return vertices_[i]; }
  const std::vector<Cell>& cells() const { return cells_; }
  const Cell& cell(std::size_t c) const { return cells_[c]; }
  const std::vector<BoundaryFacet>& boundary_facets() const { return boundary_; }

  /// Global edges as sorted vertex pairs, numbered in first-encounter order
  /// over cells. Shared by P2 dof numbering and red refinement.
  const std::vector<std::array<int, 2>>& edges() const { return edges_; }
  /// Local edge k of a cell joins local vertices local_edge(dim, k).
  const std::array<int, 6>& cell_edges(std::size_t c) const { return cell_edges_[c]; }
  static std::array<int, 2> local_edge(int dim, int k);
  static int edges_per_cell(int dim) { return dim == 2 ? 3 : 6; }

  /// Owning cell of boundary facet f and the local index of the cell vertex
  /// opposite to it.
  int facet_cell(std::size_t f) const { return facet_cell_[f]; }
  int facet_opposite(std::size_t f) const { return facet_opposite_[f]; }

  double cell_volume(std::size_t c) const;
  double total_volume() const;
  /// Outward unit normal and measure of boundary facet f.
  Point facet_normal(std::size_t f) const;
  double facet_measure(std::size_t f) const;

 private:
  void orient_cells();
  void build_edges();
  void attach_boundary();

  int dim_;
  int level_;
  std::vector<Point> vertices_;
  std::vector<Cell> cells_;
  std::vector<BoundaryFacet> boundary_;
  std::vector<std::array<int, 2>> edges_;
  std::vector<std::array<int, 6>> cell_edges_;
  std::vector<int> facet_cell_;
  std::vector<int> facet_opposite_;
};

/// Crossed-triangle mesh of [0,length]x[0,height]: every rectangle of the
/// nx-by-ny grid is split into 4 triangles through its center. x=0 is
/// inflow, x=length outflow, top and bottom are wall.
SimplicialMesh build_channel_2d(double length, double height, int nx, int ny);

/// Straight-facet tetrahedral approximation of the pipe
/// {0 < x1 < length, (x2-0.5)^2 + (x3-0.5)^2 < radius^2}.
SimplicialMesh build_pipe_3d(double radius, double length, double target_h);

/// Red refinement: 4 children per triangle, 8 per tetrahedron. New vertex
/// n_vertices() + e sits at the midpoint of edge e.
SimplicialMesh refine_uniform(const SimplicialMesh& mesh);

/// vol(K)^(1/dim).
double cell_diameter_h(const SimplicialMesh& mesh, std::size_t cell);

/// Plain-text mesh format:
///   simplicial-mesh <dim>
///   <n_vertices> <n_cells> <n_boundary_facets>
///   <n_vertices lines of dim coordinates>
///   <n_cells lines of dim+1 vertex indices>
///   <n_boundary_facets lines: dim vertex indices, then inflow|outflow|wall>
void write_mesh(std::ostream& out, const SimplicialMesh& mesh);
SimplicialMesh read_mesh(std::istream& in);

}  // namespace mdt
