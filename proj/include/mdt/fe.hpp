#pragma once

#include <array>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include "mdt/mesh.hpp"
#include "mdt/quadrature.hpp"
#include "mdt/sparse.hpp"
#include "mdt/vec.hpp"

namespace mdt {

using Bary = std::array<double, 4>;
using Grad = Vec3;

/// Affine cell map data: volume and the gradients of the barycentric
/// coordinates.
struct CellGeometry {
  double volume = 0.0;
  std::array<Grad, 4> grad_lambda{};
};

CellGeometry cell_geometry(const SimplicialMesh& mesh, std::size_t cell);
Point bary_to_point(const SimplicialMesh& mesh, std::size_t cell, const Bary& bary);

/// Continuous Lagrange space S_{h,m}, m in {1,2}, with `components` copies.
/// Global dof of component k is k * n_scalar_dofs() + scalar dof. Scalar dofs
/// are the mesh vertices, followed (m = 2) by the edge midpoints in the
/// mesh's edge order.
class FESpace {
 public:
  FESpace(std::shared_ptr<const SimplicialMesh> mesh, int degree, int components = 1);

  const SimplicialMesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const SimplicialMesh>& mesh_ptr() const { return mesh_; }
  int dim() const { return mesh_->dim(); }
  int degree() const { return degree_; }
  int components() const { return components_; }
  std::size_t n_scalar_dofs() const { return n_scalar_; }
  std::size_t n_dofs() const { return n_scalar_ * components_; }
  int n_local() const { return n_local_; }

  /// Scalar dofs of a cell in local basis order (vertices, then local edges).
  std::span<const int> cell_dofs(std::size_t cell) const {
    return {cell_dofs_.data() + cell * n_local_, static_cast<std::size_t>(n_local_)};
  }
  Point dof_point(std::size_t scalar_dof) const;

  /// Scalar dofs on boundary facets carrying one of `tags`, sorted.
  std::vector<int> boundary_dofs(const std::set<BoundaryTag>& tags) const;
  /// Scalar dofs of boundary facet f.
  std::vector<int> facet_dofs(std::size_t f) const;

 private:
  std::shared_ptr<const SimplicialMesh> mesh_;
  int degree_;
  int components_;
  int n_local_;
  std::size_t n_scalar_;
  std::vector<int> cell_dofs_;
};

/// Reference basis values and derivatives with respect to the barycentric
/// coordinates (the physical gradient is sum_j dphi/dlambda_j grad lambda_j).
void eval_basis(int dim, int degree, const Bary& bary, std::span<double> values,
                std::span<Bary> dlambda);

struct DiscreteField {
  std::shared_ptr<const FESpace> space;
  Vector coeffs;

  DiscreteField() = default;
  explicit DiscreteField(std::shared_ptr<const FESpace> s)
      : space(std::move(s)), coeffs(space->n_dofs(), 0.0) {}
  DiscreteField(std::shared_ptr<const FESpace> s, Vector c);

  double value(std::size_t cell, const Bary& bary, int comp = 0) const;
  Grad gradient(std::size_t cell, const Bary& bary, int comp = 0) const;
  /// Nodal value of component `comp` at scalar dof i.
  double at(std::size_t scalar_dof, int comp = 0) const {
    return coeffs[comp * space->n_scalar_dofs() + scalar_dof];
  }
};

/// Basis values, physical gradients and JxW of one space on one cell at the
/// points of a quadrature rule. Reinitialized per cell; not thread-shared.
class CellValues {
 public:
  CellValues(const FESpace& space, const QuadratureRule& rule);

  void reinit(std::size_t cell);

  std::size_t cell() const { return cell_; }
  int n_q() const { return n_q_; }
  int n_basis() const { return nb_; }
  double phi(int q, int a) const { return phi_[q * nb_ + a]; }
  const Grad& grad(int q, int a) const { return grad_[q * nb_ + a]; }
  double JxW(int q) const { return jxw_[q]; }
  const Point& point(int q) const { return points_[q]; }
  const Bary& bary(int q) const { return rule_[q].bary; }
  double volume() const { return geom_.volume; }
  std::span<const int> dofs() const { return space_.cell_dofs(cell_); }
  const FESpace& space() const { return space_; }

  /// Interpolated value / gradient of component `comp` of a coefficient
  /// vector living on this space.
  double value(std::span<const double> coeffs, int q, int comp = 0) const;
  Grad gradient(std::span<const double> coeffs, int q, int comp = 0) const;

 private:
  const FESpace& space_;
  const QuadratureRule& rule_;
  int dim_, nb_, n_q_;
  std::size_t cell_ = 0;
  CellGeometry geom_;
  std::vector<double> phi_;
  std::vector<Bary> dlam_;
  std::vector<Grad> grad_;
  std::vector<double> jxw_;
  std::vector<Point> points_;
};

/// Same as CellValues on a boundary facet, evaluated from the owning cell.
class FacetValues {
 public:
  FacetValues(const FESpace& space, int order);

  void reinit(std::size_t facet);

  std::size_t facet() const { return facet_; }
  std::size_t cell() const { return cell_; }
  int n_q() const { return static_cast<int>(jxw_.size()); }
  int n_basis() const { return nb_; }
  double phi(int q, int a) const { return phi_[q * nb_ + a]; }
  const Grad& grad(int q, int a) const { return grad_[q * nb_ + a]; }
  double JxW(int q) const { return jxw_[q]; }
  const Point& point(int q) const { return points_[q]; }
  const Bary& bary(int q) const { return bary_[q]; }
  const Point& normal() const { return normal_; }
  std::span<const int> dofs() const { return space_.cell_dofs(cell_); }

  double value(std::span<const double> coeffs, int q, int comp = 0) const;
  Grad gradient(std::span<const double> coeffs, int q, int comp = 0) const;

 private:
  const FESpace& space_;
  const QuadratureRule& rule_;
  int dim_, nb_;
  std::size_t facet_ = 0, cell_ = 0;
  Point normal_{};
  std::vector<Bary> bary_;
  std::vector<double> phi_;
  std::vector<Grad> grad_;
  std::vector<double> jxw_;
  std::vector<Point> points_;
};

/// Nodal interpolation.
DiscreteField interpolate(std::shared_ptr<const FESpace> space,
                          const std::function<double(const Point&)>& f);
DiscreteField interpolate_vector(std::shared_ptr<const FESpace> space,
                                 const std::function<Point(const Point&)>& f);

}  // namespace mdt
