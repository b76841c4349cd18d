#include "mdt/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace mdt {

DofLayout::DofLayout(std::vector<std::shared_ptr<const FESpace>> spaces)
    : spaces_(std::move(spaces)) {
  if (spaces_.empty()) throw std::invalid_argument("empty dof layout");
  for (const auto& s : spaces_) {
    if (!s) throw std::invalid_argument("null space in dof layout");
    if (&s->mesh() != &spaces_[0]->mesh())
      throw std::invalid_argument("spaces of a layout must share the mesh");
    offsets_.push_back(n_dofs_);
    local_offsets_.push_back(n_local_);
    n_dofs_ += s->n_dofs();
    n_local_ += s->n_local() * s->components();
  }
}

void DofLayout::cell_dofs(std::size_t cell, std::span<int> out) const {
  int k = 0;
  for (std::size_t b = 0; b < spaces_.size(); ++b) {
    const auto& s = *spaces_[b];
    const auto d = s.cell_dofs(cell);
    for (int comp = 0; comp < s.components(); ++comp) {
      const std::size_t off = offsets_[b] + comp * s.n_scalar_dofs();
      for (int dof : d) out[k++] = static_cast<int>(off + dof);
    }
  }
}

Assembler::Assembler(DofLayout rows, DofLayout cols)
    : rows_(std::move(rows)), cols_(std::move(cols)) {
  if (&rows_.space(0).mesh() != &cols_.space(0).mesh())
    throw std::invalid_argument("test and trial spaces must share the mesh");
  n_cells_ = rows_.space(0).mesh().n_cells();
  nrl_ = rows_.n_local();
  ncl_ = cols_.n_local();
  row_dofs_.resize(n_cells_ * nrl_);
  std::vector<int> col_dofs(n_cells_ * ncl_);
  for (std::size_t c = 0; c < n_cells_; ++c) {
    rows_.cell_dofs(c, {row_dofs_.data() + c * nrl_, std::size_t(nrl_)});
    cols_.cell_dofs(c, {col_dofs.data() + c * ncl_, std::size_t(ncl_)});
  }
  const std::size_t nr = rows_.n_dofs();
  const bool square = &rows_ == &cols_ || rows_.n_dofs() == cols_.n_dofs();
  std::vector<std::vector<int>> pattern(nr);
  for (std::size_t c = 0; c < n_cells_; ++c)
    for (int i = 0; i < nrl_; ++i) {
      auto& row = pattern[row_dofs_[c * nrl_ + i]];
      row.insert(row.end(), col_dofs.begin() + c * ncl_, col_dofs.begin() + (c + 1) * ncl_);
    }
  row_ptr_.assign(nr + 1, 0);
  for (std::size_t r = 0; r < nr; ++r) {
    auto& row = pattern[r];
    // keep the diagonal so that Dirichlet rows can always be replaced
    if (square) row.push_back(static_cast<int>(r));
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    row_ptr_[r + 1] = row_ptr_[r] + row.size();
  }
  col_idx_.reserve(row_ptr_.back());
  for (auto& row : pattern) {
    col_idx_.insert(col_idx_.end(), row.begin(), row.end());
    std::vector<int>().swap(row);
  }
  scatter_.resize(n_cells_ * nrl_ * ncl_);
  for (std::size_t c = 0; c < n_cells_; ++c)
    for (int i = 0; i < nrl_; ++i) {
      const int r = row_dofs_[c * nrl_ + i];
      const auto begin = col_idx_.begin() + row_ptr_[r];
      const auto end = col_idx_.begin() + row_ptr_[r + 1];
      for (int j = 0; j < ncl_; ++j) {
        const auto it = std::lower_bound(begin, end, col_dofs[c * ncl_ + j]);
        scatter_[(c * nrl_ + i) * ncl_ + j] = static_cast<int>(it - col_idx_.begin());
      }
    }
}

SparseMatrix Assembler::make_matrix() const {
  return SparseMatrix(rows_.n_dofs(), cols_.n_dofs(), row_ptr_, col_idx_,
                      std::vector<double>(col_idx_.size(), 0.0));
}

void Assembler::assemble(const KernelFactory& factory, SparseMatrix* A, Vector* b,
                         int workers) const {
  if (A) {
    if (A->nnz() != col_idx_.size() || A->n_rows() != rows_.n_dofs())
      throw std::invalid_argument("matrix does not carry the assembler pattern");
    std::fill(A->values().begin(), A->values().end(), 0.0);
  }
  if (b) b->assign(rows_.n_dofs(), 0.0);
  workers = std::max(1, workers);
  const std::size_t mat_size = A ? std::size_t(nrl_) * ncl_ : 0;
  const std::size_t vec_size = b ? std::size_t(nrl_) : 0;
  const std::size_t batch = workers == 1 ? 1 : 2048;
  std::vector<CellKernel> kernels;
  for (int w = 0; w < workers; ++w) kernels.push_back(factory());
  std::vector<double> mat_buf(batch * mat_size), vec_buf(batch * vec_size);

  auto compute = [&](int w, std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0 + w; c < c1; c += workers) {
      const std::size_t k = c - c0;
      std::span<double> Ae(mat_buf.data() + k * mat_size, mat_size);
      std::span<double> be(vec_buf.data() + k * vec_size, vec_size);
      std::fill(Ae.begin(), Ae.end(), 0.0);
      std::fill(be.begin(), be.end(), 0.0);
      kernels[w](c, Ae, be);
    }
  };

  for (std::size_t c0 = 0; c0 < n_cells_; c0 += batch) {
    const std::size_t c1 = std::min(n_cells_, c0 + batch);
    if (workers == 1) {
      compute(0, c0, c1);
    } else {
      std::vector<std::thread> threads;
      for (int w = 1; w < workers; ++w) threads.emplace_back(compute, w, c0, c1);
      compute(0, c0, c1);
      for (auto& t : threads) t.join();
    }
    for (std::size_t c = c0; c < c1; ++c) {
      const std::size_t k = c - c0;
      if (A) {
        const double* Ae = mat_buf.data() + k * mat_size;
        const int* pos = scatter_.data() + c * mat_size;
        auto& vals = A->values();
        for (std::size_t m = 0; m < mat_size; ++m) vals[pos[m]] += Ae[m];
      }
      if (b) {
        const double* be = vec_buf.data() + k * vec_size;
        const int* rows = row_dofs_.data() + c * nrl_;
        for (int i = 0; i < nrl_; ++i) (*b)[rows[i]] += be[i];
      }
    }
  }
}

SparseMatrix assemble_bilinear(std::shared_ptr<const FESpace> test,
                               std::shared_ptr<const FESpace> trial, const KernelFactory& kernel,
                               int workers) {
  if (!test || !trial) throw std::invalid_argument("null space");
  if (&test->mesh() != &trial->mesh())
    throw std::invalid_argument("test and trial spaces must share the mesh");
  Assembler assembler(DofLayout({test}), DofLayout({trial}));
  SparseMatrix A = assembler.make_matrix();
  assembler.assemble(kernel, &A, nullptr, workers);
  return A;
}

KernelFactory mass_kernel(std::shared_ptr<const FESpace> space) {
  return [space]() -> CellKernel {
    auto cv = std::make_shared<CellValues>(*space, quadrature_rule(space->dim(),
                                                                   2 * space->degree()));
    return [space, cv](std::size_t cell, std::span<double> Ae, std::span<double>) {
      cv->reinit(cell);
      const int nb = cv->n_basis();
      for (int q = 0; q < cv->n_q(); ++q)
        for (int i = 0; i < nb; ++i) {
          const double wi = cv->phi(q, i) * cv->JxW(q);
          for (int j = 0; j < nb; ++j) Ae[i * nb + j] += wi * cv->phi(q, j);
        }
    };
  };
}

KernelFactory stiffness_kernel(std::shared_ptr<const FESpace> space) {
  return [space]() -> CellKernel {
    const int order = std::max(1, 2 * (space->degree() - 1));
    auto cv = std::make_shared<CellValues>(*space, quadrature_rule(space->dim(), order));
    return [space, cv](std::size_t cell, std::span<double> Ae, std::span<double>) {
      cv->reinit(cell);
      const int nb = cv->n_basis();
      const int dim = space->dim();
      for (int q = 0; q < cv->n_q(); ++q)
        for (int i = 0; i < nb; ++i)
          for (int j = 0; j < nb; ++j) {
            double s = 0.0;
            for (int d = 0; d < dim; ++d) s += cv->grad(q, i)[d] * cv->grad(q, j)[d];
            Ae[i * nb + j] += s * cv->JxW(q);
          }
    };
  };
}

void DirichletConstraint::validate(std::size_t n) const {
  if (dofs.size() != values.size())
    throw std::invalid_argument("constraint dofs and values differ in length");
  std::vector<int> sorted(dofs);
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("constraint dofs are not unique");
  for (std::size_t k = 0; k < dofs.size(); ++k) {
    if (dofs[k] < 0 || static_cast<std::size_t>(dofs[k]) >= n)
      throw std::invalid_argument("constraint dof out of range: " + std::to_string(dofs[k]));
    if (!std::isfinite(values[k])) throw std::invalid_argument("constraint value not finite");
  }
}

void apply_dirichlet(SparseMatrix& A, Vector& rhs, const DirichletConstraint& c,
                     DirichletMode mode) {
  c.validate(A.n_rows());
  if (c.dofs.empty()) return;
  const std::size_t n = A.n_rows();
  std::vector<char> fixed(n, 0);
  Vector g(n, 0.0);
  for (std::size_t k = 0; k < c.dofs.size(); ++k) {
    fixed[c.dofs[k]] = 1;
    g[c.dofs[k]] = c.values[k];
  }
  const auto& rp = A.row_ptr();
  const auto& ci = A.col_idx();
  auto& vals = A.values();
  for (std::size_t i = 0; i < n; ++i) {
    if (fixed[i]) {
      bool has_diag = false;
      for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
        const bool diag = static_cast<std::size_t>(ci[k]) == i;
        vals[k] = diag ? 1.0 : 0.0;
        has_diag |= diag;
      }
      if (!has_diag)
        throw std::invalid_argument("constrained row " + std::to_string(i) +
                                    " has no diagonal entry");
      rhs[i] = g[i];
    } else if (mode == DirichletMode::SymmetricElimination) {
      for (std::size_t k = rp[i]; k < rp[i + 1]; ++k)
        if (fixed[ci[k]]) {
          rhs[i] -= vals[k] * g[ci[k]];
          vals[k] = 0.0;
        }
    }
  }
}

DiscreteField l2_project(const PointSource& source, std::shared_ptr<const FESpace> target,
                         const LinearSolverConfig& solver, const SparseMatrix* mass, int order) {
  auto scalar = target->components() == 1
                    ? target
                    : std::make_shared<const FESpace>(target->mesh_ptr(), target->degree(), 1);
  SparseMatrix own_mass;
  if (!mass) {
    own_mass = assemble_bilinear(scalar, scalar, mass_kernel(scalar));
    mass = &own_mass;
  }
  const int nc = target->components();
  const std::size_t n = target->n_scalar_dofs();
  std::vector<Vector> rhs(nc, Vector(n, 0.0));
  CellValues cv(*scalar, quadrature_rule(target->dim(), order));
  std::vector<double> val(nc);
  for (std::size_t c = 0; c < target->mesh().n_cells(); ++c) {
    cv.reinit(c);
    const auto dofs = cv.dofs();
    for (int q = 0; q < cv.n_q(); ++q) {
      source(c, cv.bary(q), cv.point(q), val);
      for (int k = 0; k < nc; ++k) {
        const double w = val[k] * cv.JxW(q);
        for (int a = 0; a < cv.n_basis(); ++a) rhs[k][dofs[a]] += w * cv.phi(q, a);
      }
    }
  }
  DiscreteField out(target);
  for (int k = 0; k < nc; ++k) {
    std::span<double> x(out.coeffs.data() + k * n, n);
    const auto rep = solve_linear(*mass, rhs[k], x, solver);
    if (!rep.converged)
      throw LinearSolverError("L2 projection solve did not converge (residual " +
                              std::to_string(rep.final_residual) + ")");
  }
  return out;
}

}  // namespace mdt
