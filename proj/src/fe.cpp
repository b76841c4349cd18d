#include "mdt/fe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mdt {

CellGeometry cell_geometry(const SimplicialMesh& mesh, std::size_t cell) {
  const int dim = mesh.dim();
  const auto& c = mesh.cell(cell);
  const Point& x0 = mesh.vertex(c[0]);
  double J[3][3] = {};
  for (int k = 0; k < dim; ++k) {
    const Point& xk = mesh.vertex(c[k + 1]);
    for (int i = 0; i < dim; ++i) J[i][k] = xk[i] - x0[i];
  }
  CellGeometry g;
  double inv[3][3] = {};
  double det;
  if (dim == 2) {
    det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
    inv[0][0] = J[1][1] / det;
    inv[0][1] = -J[0][1] / det;
    inv[1][0] = -J[1][0] / det;
    inv[1][1] = J[0][0] / det;
    g.volume = std::abs(det) / 2.0;
  } else {
    det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
          J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
          J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    inv[0][0] = (J[1][1] * J[2][2] - J[1][2] * J[2][1]) / det;
    inv[0][1] = (J[0][2] * J[2][1] - J[0][1] * J[2][2]) / det;
    inv[0][2] = (J[0][1] * J[1][2] - J[0][2] * J[1][1]) / det;
    inv[1][0] = (J[1][2] * J[2][0] - J[1][0] * J[2][2]) / det;
    inv[1][1] = (J[0][0] * J[2][2] - J[0][2] * J[2][0]) / det;
    inv[1][2] = (J[0][2] * J[1][0] - J[0][0] * J[1][2]) / det;
    inv[2][0] = (J[1][0] * J[2][1] - J[1][1] * J[2][0]) / det;
    inv[2][1] = (J[0][1] * J[2][0] - J[0][0] * J[2][1]) / det;
    inv[2][2] = (J[0][0] * J[1][1] - J[0][1] * J[1][0]) / det;
    g.volume = std::abs(det) / 6.0;
  }
  // lambda_k (k >= 1) is row k-1 of J^-1 applied to x - x0.
  for (int k = 1; k <= dim; ++k)
    for (int i = 0; i < dim; ++i) g.grad_lambda[k][i] = inv[k - 1][i];
  for (int i = 0; i < dim; ++i) {
    double s = 0.0;
    for (int k = 1; k <= dim; ++k) s += g.grad_lambda[k][i];
    g.grad_lambda[0][i] = -s;
  }
  return g;
}

Point bary_to_point(const SimplicialMesh& mesh, std::size_t cell, const Bary& bary) {
  Point x{0.0, 0.0, 0.0};
  const auto& c = mesh.cell(cell);
  for (int k = 0; k <= mesh.dim(); ++k) {
    const Point& v = mesh.vertex(c[k]);
    for (int i = 0; i < 3; ++i) x[i] += bary[k] * v[i];
  }
  return x;
}

FESpace::FESpace(std::shared_ptr<const SimplicialMesh> mesh, int degree, int components)
    : mesh_(std::move(mesh)), degree_(degree), components_(components) {
  if (!mesh_) throw std::invalid_argument("FESpace needs a mesh");
  if (degree != 1 && degree != 2) throw std::invalid_argument("degree must be 1 or 2");
  if (components < 1) throw std::invalid_argument("components must be positive");
  const int dim = mesh_->dim();
  const int nv = dim + 1;
  const int ne = SimplicialMesh::edges_per_cell(dim);
  n_local_ = degree == 1 ? nv : nv + ne;
  n_scalar_ = mesh_->n_vertices() + (degree == 2 ? mesh_->n_edges() : 0);
  cell_dofs_.resize(mesh_->n_cells() * n_local_);
  for (std::size_t c = 0; c < mesh_->n_cells(); ++c) {
    int* d = cell_dofs_.data() + c * n_local_;
    const auto& cell = mesh_->cell(c);
    for (int k = 0; k < nv; ++k) d[k] = cell[k];
    if (degree == 2) {
      const auto& ce = mesh_->cell_edges(c);
      for (int k = 0; k < ne; ++k) d[nv + k] = static_cast<int>(mesh_->n_vertices()) + ce[k];
    }
  }
}

Point FESpace::dof_point(std::size_t i) const {
  if (i < mesh_->n_vertices()) return mesh_->vertex(static_cast<int>(i));
  const auto& e = mesh_->edges().at(i - mesh_->n_vertices());
  const Point& a = mesh_->vertex(e[0]);
  const Point& b = mesh_->vertex(e[1]);
  return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])};
}

std::vector<int> FESpace::facet_dofs(std::size_t f) const {
  const int dim = mesh_->dim();
  const auto& facet = mesh_->boundary_facets()[f];
  std::vector<int> out(facet.vertices.begin(), facet.vertices.begin() + dim);
  if (degree_ == 2) {
    const int c = mesh_->facet_cell(f);
    const int opp = mesh_->facet_opposite(f);
    const auto& ce = mesh_->cell_edges(c);
    for (int k = 0; k < SimplicialMesh::edges_per_cell(dim); ++k) {
      const auto le = SimplicialMesh::local_edge(dim, k);
      if (le[0] != opp && le[1] != opp)
        out.push_back(static_cast<int>(mesh_->n_vertices()) + ce[k]);
    }
  }
  return out;
}

std::vector<int> FESpace::boundary_dofs(const std::set<BoundaryTag>& tags) const {
  std::vector<int> out;
  for (std::size_t f = 0; f < mesh_->n_boundary_facets(); ++f) {
    if (!tags.count(mesh_->boundary_facets()[f].tag)) continue;
    const auto d = facet_dofs(f);
    out.insert(out.end(), d.begin(), d.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void eval_basis(int dim, int degree, const Bary& l, std::span<double> values,
                std::span<Bary> dlambda) {
  const int nv = dim + 1;
  for (int i = 0; i < nv; ++i) {
    Bary d{};
    if (degree == 1) {
      values[i] = l[i];
      d[i] = 1.0;
    } else {
      values[i] = l[i] * (2.0 * l[i] - 1.0);
      d[i] = 4.0 * l[i] - 1.0;
    }
    dlambda[i] = d;
  }
  if (degree == 2) {
    for (int k = 0; k < SimplicialMesh::edges_per_cell(dim); ++k) {
      const auto e = SimplicialMesh::local_edge(dim, k);
      Bary d{};
      values[nv + k] = 4.0 * l[e[0]] * l[e[1]];
      d[e[0]] = 4.0 * l[e[1]];
      d[e[1]] = 4.0 * l[e[0]];
      dlambda[nv + k] = d;
    }
  }
}

namespace {

int local_count(int dim, int degree) {
  return degree == 1 ? dim + 1 : (dim + 1) * (dim + 2) / 2;
}

Grad physical_gradient(int dim, const Bary& dl, const CellGeometry& g) {
  Grad out{0.0, 0.0, 0.0};
  for (int j = 0; j <= dim; ++j) {
    if (dl[j] == 0.0) continue;
    for (int i = 0; i < dim; ++i) out[i] += dl[j] * g.grad_lambda[j][i];
  }
  return out;
}

}  // namespace

DiscreteField::DiscreteField(std::shared_ptr<const FESpace> s, Vector c)
    : space(std::move(s)), coeffs(std::move(c)) {
  if (coeffs.size() != space->n_dofs())
    throw std::invalid_argument("coefficient vector does not match the space");
}

double DiscreteField::value(std::size_t cell, const Bary& bary, int comp) const {
  const int dim = space->dim();
  const int nb = local_count(dim, space->degree());
  double vals[10];
  Bary dl[10];
  eval_basis(dim, space->degree(), bary, {vals, 10}, {dl, 10});
  const auto dofs = space->cell_dofs(cell);
  const std::size_t off = comp * space->n_scalar_dofs();
  double s = 0.0;
  for (int a = 0; a < nb; ++a) s += vals[a] * coeffs[off + dofs[a]];
  return s;
}

Grad DiscreteField::gradient(std::size_t cell, const Bary& bary, int comp) const {
  const int dim = space->dim();
  const int nb = local_count(dim, space->degree());
  double vals[10];
  Bary dl[10];
  eval_basis(dim, space->degree(), bary, {vals, 10}, {dl, 10});
  const auto g = cell_geometry(space->mesh(), cell);
  const auto dofs = space->cell_dofs(cell);
  const std::size_t off = comp * space->n_scalar_dofs();
  Bary acc{};
  for (int a = 0; a < nb; ++a)
    for (int j = 0; j <= dim; ++j) acc[j] += dl[a][j] * coeffs[off + dofs[a]];
  return physical_gradient(dim, acc, g);
}

CellValues::CellValues(const FESpace& space, const QuadratureRule& rule)
    : space_(space),
      rule_(rule),
      dim_(space.dim()),
      nb_(space.n_local()),
      n_q_(static_cast<int>(rule.size())),
      phi_(rule.size() * nb_),
      dlam_(rule.size() * nb_),
      grad_(rule.size() * nb_),
      jxw_(rule.size()),
      points_(rule.size()) {
  for (int q = 0; q < n_q_; ++q)
    eval_basis(dim_, space.degree(), rule[q].bary, {phi_.data() + q * nb_, std::size_t(nb_)},
               {dlam_.data() + q * nb_, std::size_t(nb_)});
}

void CellValues::reinit(std::size_t cell) {
  cell_ = cell;
  geom_ = cell_geometry(space_.mesh(), cell);
  const double scale = geom_.volume * (dim_ == 2 ? 2.0 : 6.0);
  for (int q = 0; q < n_q_; ++q) {
    jxw_[q] = rule_[q].weight * scale;
    points_[q] = bary_to_point(space_.mesh(), cell, rule_[q].bary);
    for (int a = 0; a < nb_; ++a)
      grad_[q * nb_ + a] = physical_gradient(dim_, dlam_[q * nb_ + a], geom_);
  }
}

double CellValues::value(std::span<const double> coeffs, int q, int comp) const {
  const auto d = dofs();
  const std::size_t off = comp * space_.n_scalar_dofs();
  double s = 0.0;
  for (int a = 0; a < nb_; ++a) s += phi(q, a) * coeffs[off + d[a]];
  return s;
}

Grad CellValues::gradient(std::span<const double> coeffs, int q, int comp) const {
  const auto d = dofs();
  const std::size_t off = comp * space_.n_scalar_dofs();
  Grad g{0.0, 0.0, 0.0};
  for (int a = 0; a < nb_; ++a) {
    const double c = coeffs[off + d[a]];
    const Grad& ga = grad(q, a);
    for (int i = 0; i < dim_; ++i) g[i] += c * ga[i];
  }
  return g;
}

FacetValues::FacetValues(const FESpace& space, int order)
    : space_(space),
      rule_(simplex_rule(space.dim() - 1, order)),
      dim_(space.dim()),
      nb_(space.n_local()),
      bary_(rule_.size()),
      phi_(rule_.size() * nb_),
      grad_(rule_.size() * nb_),
      jxw_(rule_.size()),
      points_(rule_.size()) {}

void FacetValues::reinit(std::size_t facet) {
  const auto& mesh = space_.mesh();
  facet_ = facet;
  cell_ = static_cast<std::size_t>(mesh.facet_cell(facet));
  normal_ = mesh.facet_normal(facet);
  const double measure = mesh.facet_measure(facet);
  const double ref = dim_ == 2 ? 1.0 : 0.5;
  const auto geom = cell_geometry(mesh, cell_);
  const auto& cell = mesh.cell(cell_);
  const auto& fv = mesh.boundary_facets()[facet].vertices;
  int local[3];
  for (int k = 0; k < dim_; ++k)
    local[k] = static_cast<int>(std::find(cell.begin(), cell.begin() + dim_ + 1, fv[k]) -
                                cell.begin());
  std::vector<Bary> dl(nb_);
  for (std::size_t q = 0; q < rule_.size(); ++q) {
    Bary b{};
    for (int k = 0; k < dim_; ++k) b[local[k]] = rule_[q].bary[k];
    bary_[q] = b;
    jxw_[q] = rule_[q].weight * measure / ref;
    points_[q] = bary_to_point(mesh, cell_, b);
    eval_basis(dim_, space_.degree(), b, {phi_.data() + q * nb_, std::size_t(nb_)}, dl);
    for (int a = 0; a < nb_; ++a) grad_[q * nb_ + a] = physical_gradient(dim_, dl[a], geom);
  }
}

double FacetValues::value(std::span<const double> coeffs, int q, int comp) const {
  const auto d = dofs();
  const std::size_t off = comp * space_.n_scalar_dofs();
  double s = 0.0;
  for (int a = 0; a < nb_; ++a) s += phi(q, a) * coeffs[off + d[a]];
  return s;
}

Grad FacetValues::gradient(std::span<const double> coeffs, int q, int comp) const {
  const auto d = dofs();
  const std::size_t off = comp * space_.n_scalar_dofs();
  Grad g{0.0, 0.0, 0.0};
  for (int a = 0; a < nb_; ++a) {
    const double c = coeffs[off + d[a]];
    for (int i = 0; i < dim_; ++i) g[i] += c * grad(q, a)[i];
  }
  return g;
}

DiscreteField interpolate(std::shared_ptr<const FESpace> space,
                          const std::function<double(const Point&)>& f) {
  if (space->components() != 1) throw std::invalid_argument("interpolate expects a scalar space");
  DiscreteField out(space);
  for (std::size_t i = 0; i < space->n_scalar_dofs(); ++i) out.coeffs[i] = f(space->dof_point(i));
  return out;
}

DiscreteField interpolate_vector(std::shared_ptr<const FESpace> space,
                                 const std::function<Point(const Point&)>& f) {
  DiscreteField out(space);
  const std::size_t n = space->n_scalar_dofs();
  for (std::size_t i = 0; i < n; ++i) {
    const Point v = f(space->dof_point(i));
    for (int k = 0; k < space->components(); ++k) out.coeffs[k * n + i] = v[k];
  }
  return out;
}

}  // namespace mdt
