#pragma once

#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "mdt/fe.hpp"
#include "mdt/linalg.hpp"
#include "mdt/sparse.hpp"

namespace mdt {

/// Concatenation of FE spaces into one global numbering, space after space.
/// The local dofs of a cell are ordered block by block, component-major
/// within a block, scalar basis order within a component.
class DofLayout {
 public:
  DofLayout() = default;
  explicit DofLayout(std::vector<std::shared_ptr<const FESpace>> spaces);

  std::size_t n_blocks() const { return spaces_.size(); }
  const FESpace& space(std::size_t b) const { return *spaces_[b]; }
  std::size_t n_dofs() const { return n_dofs_; }
  std::size_t block_offset(std::size_t b) const { return offsets_[b]; }
  int n_local() const { return n_local_; }
  /// Position of (block b, component k, basis function 0) in the local dofs.
  int local_offset(std::size_t b, int comp) const {
    return local_offsets_[b] + comp * spaces_[b]->n_local();
  }
  void cell_dofs(std::size_t cell, std::span<int> out) const;

 private:
  std::vector<std::shared_ptr<const FESpace>> spaces_;
  std::vector<std::size_t> offsets_;
  std::vector<int> local_offsets_;
  std::size_t n_dofs_ = 0;
  int n_local_ = 0;
};

/// Element kernel: fills the (zeroed) row-major local matrix and local vector
/// of one cell. Either span may be empty when that output is not requested.
using CellKernel = std::function<void(std::size_t cell, std::span<double> Ae, std::span<double> be)>;
/// Creates one kernel per worker so kernels may keep private scratch state.
using KernelFactory = std::function<CellKernel()>;

/// Cell-wise assembly with a precomputed sparsity pattern and scatter map.
/// Local contributions may be computed by several workers; they are always
/// added to the global arrays serially in cell order, so results are bitwise
/// independent of the worker count.
class Assembler {
 public:
  Assembler(DofLayout rows, DofLayout cols);
  explicit Assembler(const DofLayout& layout) : Assembler(layout, layout) {}

  const DofLayout& rows() const { return rows_; }
  const DofLayout& cols() const { return cols_; }
  /// Matrix with the full pattern and zero values.
  SparseMatrix make_matrix() const;

  /// Overwrites A (pattern from make_matrix) and/or b with the assembled sum.
  void assemble(const KernelFactory& kernel, SparseMatrix* A, Vector* b, int workers = 1) const;

 private:
  DofLayout rows_, cols_;
  std::size_t n_cells_;
  int nrl_, ncl_;
  std::vector<std::size_t> row_ptr_;
  std::vector<int> col_idx_;
  std::vector<int> row_dofs_;  // n_cells * nrl
  std::vector<int> scatter_;   // n_cells * nrl * ncl positions into values
};

/// Global matrix of the kernel for a pair of spaces on the same mesh.
SparseMatrix assemble_bilinear(std::shared_ptr<const FESpace> test,
                               std::shared_ptr<const FESpace> trial, const KernelFactory& kernel,
                               int workers = 1);

/// Scalar mass / stiffness kernels, quadrature order 2 * degree.
KernelFactory mass_kernel(std::shared_ptr<const FESpace> space);
KernelFactory stiffness_kernel(std::shared_ptr<const FESpace> space);

struct DirichletConstraint {
  std::vector<int> dofs;
  std::vector<double> values;

  /// Indices unique and < n, values finite.
  void validate(std::size_t n) const;
};

enum class DirichletMode { RowReplacement, SymmetricElimination };

/// Constrained rows become identity rows with rhs equal to the prescribed
/// value. SymmetricElimination also moves the constrained columns to the rhs.
/// The diagonal entry of each constrained row must be in the pattern.
void apply_dirichlet(SparseMatrix& A, Vector& rhs, const DirichletConstraint& c,
                     DirichletMode mode = DirichletMode::RowReplacement);

/// Value of the source at a point of a cell; out has one entry per component
/// of the target space.
using PointSource =
    std::function<void(std::size_t cell, const Bary& bary, const Point& x, std::span<double> out)>;

/// L2 projection onto `target`, one mass-matrix solve per component. The
/// scalar mass matrix may be passed in to avoid reassembly.
DiscreteField l2_project(const PointSource& source, std::shared_ptr<const FESpace> target,
                         const LinearSolverConfig& solver, const SparseMatrix* mass = nullptr,
                         int order = 4);

}  // namespace mdt
