#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdt/sparse.hpp"

namespace mdt {

class LinearSolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CG met p^T A p <= 0.
class IndefiniteMatrixError : public LinearSolverError {
 public:
  using LinearSolverError::LinearSolverError;
};

/// ILU(0) or Jacobi hit a zero pivot.
class FactorizationError : public LinearSolverError {
 public:
  using LinearSolverError::LinearSolverError;
};

enum class KrylovMethod { CG, GMRES };
/// SparseLU is an exact sparse factorization; as an inner PCD solve it is
/// applied once, without a Krylov loop.
enum class PreconditionerKind { None, Jacobi, ILU0, BlockPCD, SparseLU };

struct LinearSolverConfig {
  KrylovMethod method = KrylovMethod::GMRES;
  double rel_tol = 1e-10;
  double abs_tol = 1e-14;
  int max_iters = 2000;
  int restart = 60;
  PreconditionerKind preconditioner = PreconditionerKind::ILU0;

  void validate() const;
};

struct SolveReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  /// Residual norm after each iteration (CG: sqrt(r^T M^-1 r); GMRES: the
  /// least-squares residual, reset at every restart).
  std::vector<double> history;
};

/// z = M^{-1} r. Implementations may be nonlinear (inner iterations); GMRES is
/// flexible and tolerates that.
using Preconditioner = std::function<void(std::span<const double> r, std::span<double> z)>;

/// Preconditioned CG. `x` holds the initial guess on entry. Stops when
/// ||b - A x|| <= max(rel_tol ||b||, abs_tol).
SolveReport solve_cg(const SparseMatrix& A, std::span<const double> b, std::span<double> x,
                     const LinearSolverConfig& cfg, const Preconditioner& M = {});

/// Restarted flexible GMRES with right preconditioning. Stagnation over a full
/// restart cycle ends the solve with converged = false.
SolveReport solve_gmres(const SparseMatrix& A, std::span<const double> b, std::span<double> x,
                        const LinearSolverConfig& cfg, const Preconditioner& M = {});

/// Operators needed by the pressure-convection-diffusion block preconditioner
/// for [[F, B^T], [B, 0]] systems. The Schur complement -B F^-1 B^T is
/// approximated by -A_p F_p^-1 M_p.
struct PcdOperators {
  SparseMatrix F;   // velocity block (n_u x n_u)
  SparseMatrix Bt;  // velocity rows, pressure columns (n_u x n_p)
  SparseMatrix Mp;  // pressure mass
  SparseMatrix Ap;  // pressure Laplacian (made nonsingular by the caller)
  SparseMatrix Fp;  // pressure convection-diffusion operator
  /// Pressure dofs whose rows in the full system are identity rows.
  std::vector<int> fixed_pressure_dofs;
  LinearSolverConfig velocity_solve{KrylovMethod::GMRES, 1e-3, 1e-14, 200, 60,
                                    PreconditionerKind::ILU0};
  LinearSolverConfig laplace_solve{KrylovMethod::CG, 1e-6, 1e-14, 500, 0,
                                   PreconditionerKind::ILU0};
  LinearSolverConfig mass_solve{KrylovMethod::CG, 1e-8, 1e-14, 200, 0,
                                PreconditionerKind::Jacobi};
};

struct PreconditionerContext {
  const SparseMatrix* matrix = nullptr;        // jacobi, ilu0
  std::shared_ptr<const PcdOperators> pcd;     // block_pcd
  /// ilu0 only: pivots are formed from A + shift * diag(A). Used for
  /// singular semidefinite operators (pure Neumann problems).
  double diagonal_shift = 0.0;
};

Preconditioner make_preconditioner(PreconditionerKind kind, const PreconditionerContext& ctx);
Preconditioner make_jacobi(const SparseMatrix& A);
Preconditioner make_ilu0(const SparseMatrix& A, double diagonal_shift = 0.0);
Preconditioner make_block_pcd(std::shared_ptr<const PcdOperators> ops);
/// Throws FactorizationError for a numerically singular matrix.
Preconditioner make_sparse_lu(const SparseMatrix& A);

/// Solves with cfg.method, building the configured jacobi/ilu0 preconditioner
/// from A. BlockPCD requires the explicit overload below.
SolveReport solve_linear(const SparseMatrix& A, std::span<const double> b, std::span<double> x,
                         const LinearSolverConfig& cfg);
std::pair<Vector, SolveReport> solve_linear(const SparseMatrix& A, std::span<const double> b,
                                            const LinearSolverConfig& cfg);

struct NewtonConfig {
  double rel_update_tol = 1e-8;
  int max_iters = 30;
  bool damping = true;
  double damping_factor = 0.5;
  double min_step = 1.0 / 1024.0;
  /// Also stop once ||F|| has dropped this far below its initial value;
  /// further updates would only chase roundoff.
  double residual_roundoff = 1e-13;
};

struct NonlinearProblem {
  std::function<void(std::span<const double> x, std::span<double> F)> residual;
  std::function<SparseMatrix(std::span<const double> x)> jacobian;
};

/// Solves J dx = rhs; dx holds zeros on entry.
using LinearSolve =
    std::function<SolveReport(const SparseMatrix& J, std::span<const double> rhs,
                              std::span<double> dx)>;

struct NewtonReport {
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  int linear_iterations = 0;
  std::vector<double> update_norms;    // ||dx|| of the accepted steps
  std::vector<double> residual_norms;  // ||F|| before each step, then final
};

/// Damped Newton iteration stopping on ||dx|| / max(||x||, 1) <= rel_update_tol.
/// On max_iters the best iterate (smallest residual) is left in x and the
/// report is marked unconverged. Linear solve failures propagate.
NewtonReport newton_solve(const NonlinearProblem& problem, std::span<double> x,
                          const NewtonConfig& cfg, const LinearSolve& linear);
NewtonReport newton_solve(const NonlinearProblem& problem, std::span<double> x,
                          const NewtonConfig& cfg, const LinearSolverConfig& lin);

}  // namespace mdt
