#include "mdt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace mdt {

void LinearSolverConfig::validate() const {
  if (!(rel_tol > 0) || !(abs_tol > 0)) throw std::invalid_argument("solver tolerances must be > 0");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (method == KrylovMethod::GMRES && restart < 1)
    throw std::invalid_argument("GMRES restart must be >= 1");
}

namespace {

double residual_norm(const SparseMatrix& A, std::span<const double> b, std::span<const double> x,
                     Vector& r) {
  A.multiply(x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
  return norm2(r);
}

void check_dims(const SparseMatrix& A, std::span<const double> b, std::span<const double> x) {
  if (A.n_rows() != A.n_cols() || b.size() != A.n_rows() || x.size() != A.n_cols())
    throw std::invalid_argument("linear system dimension mismatch");
}

}  // namespace

SolveReport solve_cg(const SparseMatrix& A, std::span<const double> b, std::span<double> x,
                     const LinearSolverConfig& cfg, const Preconditioner& M) {
  cfg.validate();
  check_dims(A, b, x);
  const std::size_t n = b.size();
  SolveReport report;
  const double tol = std::max(cfg.rel_tol * norm2(b), cfg.abs_tol);

  Vector r(n), z(n), p(n), q(n);
  double rnorm = residual_norm(A, b, x, r);
  if (rnorm <= tol) {
    report.converged = true;
    report.final_residual = rnorm;
    return report;
  }
  auto precondition = [&](const Vector& in, Vector& out) {
    if (M)
      M(in, out);
    else
      out = in;
  };
  precondition(r, z);
  p = z;
  double rz = dot(r, z);
  for (int k = 1; k <= cfg.max_iters; ++k) {
    A.multiply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0))
      throw IndefiniteMatrixError("CG breakdown: p^T A p = " + std::to_string(pq));
    const double alpha = rz / pq;
    axpy(alpha, p, x);
    axpy(-alpha, q, r);
    rnorm = norm2(r);
    report.iterations = k;
    precondition(r, z);
    const double rz_new = dot(r, z);
    report.history.push_back(std::sqrt(std::abs(rz_new)));
    if (rnorm <= tol) {
      // the recursive residual drifts from the true one near roundoff
      rnorm = residual_norm(A, b, x, r);
      if (rnorm <= tol) break;
      precondition(r, z);
      p = z;
      rz = dot(r, z);
      continue;
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  report.final_residual = residual_norm(A, b, x, r);
  report.converged = report.final_residual <= tol;
  return report;
}

SolveReport solve_gmres(const SparseMatrix& A, std::span<const double> b, std::span<double> x,
                        const LinearSolverConfig& cfg, const Preconditioner& M) {
  cfg.validate();
  check_dims(A, b, x);
  const std::size_t n = b.size();
  const int m = cfg.restart;
  SolveReport report;
  const double tol = std::max(cfg.rel_tol * norm2(b), cfg.abs_tol);

  std::vector<Vector> V(m + 1, Vector(n)), Z(m, Vector(n));
  std::vector<std::vector<double>> H(m + 1, std::vector<double>(m, 0.0));
  std::vector<double> cs(m), sn(m), g(m + 1);
  Vector r(n), w(n);
  double previous_start = std::numeric_limits<double>::infinity();

  while (true) {
    const double beta = residual_norm(A, b, x, r);
    report.final_residual = beta;
    if (beta <= tol) {
      report.converged = true;
      break;
    }
    if (report.iterations >= cfg.max_iters) break;
    if (!(beta < previous_start)) break;  // a whole cycle without progress
    previous_start = beta;

    for (std::size_t i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    int used = 0;
    for (int j = 0; j < m; ++j) {
      if (M)
        M(V[j], Z[j]);
      else
        Z[j] = V[j];
      A.multiply(Z[j], w);
      for (int i = 0; i <= j; ++i) {
        H[i][j] = dot(w, V[i]);
        axpy(-H[i][j], V[i], w);
      }
      H[j + 1][j] = norm2(w);
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * H[i][j] + sn[i] * H[i + 1][j];
        H[i + 1][j] = -sn[i] * H[i][j] + cs[i] * H[i + 1][j];
        H[i][j] = t;
      }
      const double denom = std::hypot(H[j][j], H[j + 1][j]);
      const bool breakdown = H[j + 1][j] <= 1e-14 * denom;
      if (denom == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = H[j][j] / denom;
        sn[j] = H[j + 1][j] / denom;
      }
      const double hjj = denom;
      if (!breakdown)
        for (std::size_t i = 0; i < n; ++i) V[j + 1][i] = w[i] / H[j + 1][j];
      H[j][j] = hjj;
      H[j + 1][j] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      used = j + 1;
      ++report.iterations;
      report.history.push_back(std::abs(g[j + 1]));
      if (std::abs(g[j + 1]) <= tol || report.iterations >= cfg.max_iters || breakdown) break;
    }
    std::vector<double> y(used);
    for (int i = used - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < used; ++k) s -= H[i][k] * y[k];
      y[i] = H[i][i] != 0.0 ? s / H[i][i] : 0.0;
    }
    for (int i = 0; i < used; ++i) axpy(y[i], Z[i], x);
  }
  return report;
}

Preconditioner make_jacobi(const SparseMatrix& A) {
  Vector d = A.diagonal();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0.0) throw FactorizationError("jacobi: zero diagonal in row " + std::to_string(i));
    d[i] = 1.0 / d[i];
  }
  return [inv = std::move(d)](std::span<const double> r, std::span<double> z) {
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = inv[i] * r[i];
  };
}

namespace {

struct Ilu0Factors {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<int> col;
  std::vector<double> val;
  std::vector<std::size_t> diag;
};

}  // namespace

Preconditioner make_ilu0(const SparseMatrix& A, double diagonal_shift) {
  if (A.n_rows() != A.n_cols()) throw std::invalid_argument("ilu0 needs a square matrix");
  auto f = std::make_shared<Ilu0Factors>();
  f->n = A.n_rows();
  f->row_ptr = A.row_ptr();
  f->col = A.col_idx();
  f->val = A.values();
  f->diag.resize(f->n);
  for (std::size_t i = 0; i < f->n; ++i) {
    const auto k = A.find(i, i);
    if (k < 0) throw FactorizationError("ilu0: missing diagonal in row " + std::to_string(i));
    f->diag[i] = static_cast<std::size_t>(k);
    f->val[k] *= 1.0 + diagonal_shift;
  }
  std::vector<std::ptrdiff_t> pos(f->n, -1);
  for (std::size_t i = 0; i < f->n; ++i) {
    const std::size_t b = f->row_ptr[i], e = f->row_ptr[i + 1];
    for (std::size_t p = b; p < e; ++p) pos[f->col[p]] = static_cast<std::ptrdiff_t>(p);
    for (std::size_t p = b; p < e && static_cast<std::size_t>(f->col[p]) < i; ++p) {
      const std::size_t k = f->col[p];
      const double l = f->val[p] / f->val[f->diag[k]];
      f->val[p] = l;
      for (std::size_t q = f->diag[k] + 1; q < f->row_ptr[k + 1]; ++q) {
        const auto target = pos[f->col[q]];
        if (target >= 0) f->val[target] -= l * f->val[q];
      }
    }
    for (std::size_t p = b; p < e; ++p) pos[f->col[p]] = -1;
    const double piv = f->val[f->diag[i]];
    if (!(std::abs(piv) > 1e-300) || !std::isfinite(piv))
      throw FactorizationError("ilu0: zero pivot in row " + std::to_string(i));
  }
  return [f](std::span<const double> r, std::span<double> z) {
    const std::size_t n = f->n;
    for (std::size_t i = 0; i < n; ++i) {
      double s = r[i];
      for (std::size_t p = f->row_ptr[i]; p < f->diag[i]; ++p) s -= f->val[p] * z[f->col[p]];
      z[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = z[i];
      for (std::size_t p = f->diag[i] + 1; p < f->row_ptr[i + 1]; ++p)
        s -= f->val[p] * z[f->col[p]];
      z[i] = s / f->val[f->diag[i]];
    }
  };
}

namespace {

Preconditioner inner_solver(const SparseMatrix& A, const LinearSolverConfig& cfg) {
  if (cfg.preconditioner == PreconditionerKind::SparseLU) return make_sparse_lu(A);
  Preconditioner inner = make_preconditioner(cfg.preconditioner, {&A, nullptr, 0.0});
  return [&A, cfg, inner](std::span<const double> r, std::span<double> z) {
    std::fill(z.begin(), z.end(), 0.0);
    if (cfg.method == KrylovMethod::CG)
      solve_cg(A, r, z, cfg, inner);
    else
      solve_gmres(A, r, z, cfg, inner);
  };
}

}  // namespace

Preconditioner make_block_pcd(std::shared_ptr<const PcdOperators> ops) {
  if (!ops) throw std::invalid_argument("block_pcd needs operators");
  const std::size_t nu = ops->F.n_rows();
  const std::size_t np = ops->Mp.n_rows();
  if (ops->Bt.n_rows() != nu || ops->Bt.n_cols() != np || ops->Ap.n_rows() != np ||
      ops->Fp.n_rows() != np)
    throw std::invalid_argument("block_pcd operator dimensions are inconsistent");
  auto solve_f = inner_solver(ops->F, ops->velocity_solve);
  auto solve_ap = inner_solver(ops->Ap, ops->laplace_solve);
  auto solve_mp = inner_solver(ops->Mp, ops->mass_solve);
  return [ops, nu, np, solve_f, solve_ap, solve_mp](std::span<const double> r,
                                                    std::span<double> z) {
    const auto ru = r.subspan(0, nu);
    const auto rp = r.subspan(nu, np);
    auto zu = z.subspan(0, nu);
    auto zp = z.subspan(nu, np);
    Vector t1(np), t2(np);
    solve_ap(rp, t1);
    ops->Fp.multiply(t1, t2);
    solve_mp(t2, zp);
    for (std::size_t i = 0; i < np; ++i) zp[i] = -zp[i];
    for (int i : ops->fixed_pressure_dofs) zp[i] = rp[i];
    Vector rhs(nu);
    ops->Bt.multiply(std::span<const double>(zp.data(), np), rhs);
    for (std::size_t i = 0; i < nu; ++i) rhs[i] = ru[i] - rhs[i];
    solve_f(rhs, zu);
  };
}

Preconditioner make_sparse_lu(const SparseMatrix& A) {
  if (A.n_rows() != A.n_cols()) throw std::invalid_argument("sparse_lu needs a square matrix");
  using EigenMatrix = Eigen::SparseMatrix<double>;
  const auto n = static_cast<Eigen::Index>(A.n_rows());
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(A.values().size());
  for (std::size_t i = 0; i < A.n_rows(); ++i)
    for (std::size_t k = A.row_ptr()[i]; k < A.row_ptr()[i + 1]; ++k)
      entries.emplace_back(static_cast<Eigen::Index>(i), A.col_idx()[k], A.values()[k]);
  EigenMatrix M(n, n);
  M.setFromTriplets(entries.begin(), entries.end());
  auto lu = std::make_shared<Eigen::SparseLU<EigenMatrix>>();
  lu->compute(M);
  if (lu->info() != Eigen::Success)
    throw FactorizationError("sparse_lu: " + lu->lastErrorMessage());
  return [lu, n](std::span<const double> r, std::span<double> z) {
    Eigen::Map<const Eigen::VectorXd> rv(r.data(), n);
    Eigen::Map<Eigen::VectorXd>(z.data(), n) = lu->solve(rv);
  };
}

Preconditioner make_preconditioner(PreconditionerKind kind, const PreconditionerContext& ctx) {
  switch (kind) {
    case PreconditionerKind::None:
      return {};
    case PreconditionerKind::Jacobi:
      if (!ctx.matrix) throw std::invalid_argument("jacobi needs a matrix");
      return make_jacobi(*ctx.matrix);
    case PreconditionerKind::ILU0:
      if (!ctx.matrix) throw std::invalid_argument("ilu0 needs a matrix");
      return make_ilu0(*ctx.matrix, ctx.diagonal_shift);
    case PreconditionerKind::BlockPCD:
      return make_block_pcd(ctx.pcd);
    case PreconditionerKind::SparseLU:
      if (!ctx.matrix) throw std::invalid_argument("sparse_lu needs a matrix");
      return make_sparse_lu(*ctx.matrix);
  }
  return {};
}

SolveReport solve_linear(const SparseMatrix& A, std::span<const double> b, std::span<double> x,
                         const LinearSolverConfig& cfg) {
  if (cfg.preconditioner == PreconditionerKind::BlockPCD)
    throw std::invalid_argument("block_pcd needs explicit operators");
  const Preconditioner M = make_preconditioner(cfg.preconditioner, {&A, nullptr, 0.0});
  return cfg.method == KrylovMethod::CG ? solve_cg(A, b, x, cfg, M) : solve_gmres(A, b, x, cfg, M);
}

std::pair<Vector, SolveReport> solve_linear(const SparseMatrix& A, std::span<const double> b,
                                            const LinearSolverConfig& cfg) {
  Vector x(A.n_cols(), 0.0);
  SolveReport rep = solve_linear(A, b, x, cfg);
  return {std::move(x), std::move(rep)};
}

NewtonReport newton_solve(const NonlinearProblem& problem, std::span<double> x,
                          const NewtonConfig& cfg, const LinearSolve& linear) {
  if (!(cfg.rel_update_tol > 0)) throw std::invalid_argument("rel_update_tol must be > 0");
  const std::size_t n = x.size();
  NewtonReport report;
  Vector F(n), Ftrial(n), dx(n), rhs(n), xtrial(n);
  problem.residual(x, F);
  double fnorm = norm2(F);
  const double f0 = fnorm;
  Vector best(x.begin(), x.end());
  double best_norm = fnorm;

  for (int it = 1; it <= cfg.max_iters; ++it) {
    report.residual_norms.push_back(fnorm);
    if (fnorm == 0.0) {
      report.converged = true;
      break;
    }
    const SparseMatrix J = problem.jacobian(x);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -F[i];
    std::fill(dx.begin(), dx.end(), 0.0);
    const SolveReport lr = linear(J, rhs, dx);
    report.linear_iterations += lr.iterations;
    if (!lr.converged && !(lr.final_residual <= 1e-3 * fnorm)) {
      std::ostringstream msg;
      msg << "Newton: linear solve failed after " << lr.iterations << " iterations (residual "
          << lr.final_residual << ", nonlinear residual " << fnorm << ")";
      throw LinearSolverError(msg.str());
    }

    double step = 1.0;
    for (std::size_t i = 0; i < n; ++i) xtrial[i] = x[i] + dx[i];
    problem.residual(xtrial, Ftrial);
    double tnorm = norm2(Ftrial);
    if (cfg.damping) {
      while (!(tnorm <= fnorm) && step * cfg.damping_factor >= cfg.min_step) {
        step *= cfg.damping_factor;
        for (std::size_t i = 0; i < n; ++i) xtrial[i] = x[i] + step * dx[i];
        problem.residual(xtrial, Ftrial);
        tnorm = norm2(Ftrial);
      }
    }
    std::copy(xtrial.begin(), xtrial.end(), x.begin());
    F.swap(Ftrial);
    fnorm = tnorm;
    report.iterations = it;
    const double update = step * norm2(dx);
    report.update_norms.push_back(update);
    if (fnorm < best_norm || !std::isfinite(best_norm)) {
      best_norm = fnorm;
      best.assign(x.begin(), x.end());
    }
    if (update / std::max(norm2(std::span<const double>(x.data(), n)), 1.0) <=
            cfg.rel_update_tol ||
        fnorm <= cfg.residual_roundoff * f0) {
      report.converged = true;
      break;
    }
  }
  if (!report.converged && fnorm > best_norm) {
    std::copy(best.begin(), best.end(), x.begin());
    fnorm = best_norm;
  }
  report.final_residual = fnorm;
  report.residual_norms.push_back(fnorm);
  return report;
}

NewtonReport newton_solve(const NonlinearProblem& problem, std::span<double> x,
                          const NewtonConfig& cfg, const LinearSolverConfig& lin) {
  return newton_solve(problem, x, cfg,
                      [&lin](const SparseMatrix& J, std::span<const double> rhs,
                             std::span<double> dx) { return solve_linear(J, rhs, dx, lin); });
}

}  // namespace mdt
