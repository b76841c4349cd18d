#include "mdt/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mdt {

namespace {

constexpr int kCellOrder = 4;
constexpr int kFacetOrder = 4;
constexpr double kPotentialShift = 1e-4;

std::span<const double> sub(std::span<const double> x, std::size_t off, std::size_t n) {
  return x.subspan(off, n);
}

Tensor vector_gradient(const CellValues& cv, std::span<const double> c, int q, int dim) {
  Tensor G{};
  for (int i = 0; i < dim; ++i) {
    const Grad g = cv.gradient(c, q, i);
    for (int j = 0; j < 3; ++j) G[3 * i + j] = g[j];
  }
  return G;
}

Tensor vector_gradient(const FacetValues& fv, std::span<const double> c, int q, int dim) {
  Tensor G{};
  for (int i = 0; i < dim; ++i) {
    const Grad g = fv.gradient(c, q, i);
    for (int j = 0; j < 3; ++j) G[3 * i + j] = g[j];
  }
  return G;
}

template <class Values>
Vec3 vector_value(const Values& vals, std::span<const double> c, int q, int dim) {
  Vec3 v{};
  for (int i = 0; i < dim; ++i) v[i] = vals.value(c, q, i);
  return v;
}

Tensor field_gradient(const DiscreteField& f, std::size_t cell, const Bary& b, int dim) {
  Tensor G{};
  for (int i = 0; i < dim; ++i) {
    const Grad g = f.gradient(cell, b, i);
    for (int j = 0; j < 3; ++j) G[3 * i + j] = g[j];
  }
  return G;
}

Vec3 vector_value_at(const DiscreteField& f, std::size_t cell, const Bary& b, int dim) {
  Vec3 v{};
  for (int i = 0; i < dim; ++i) v[i] = f.value(cell, b, i);
  return v;
}

Bary centroid(int dim) {
  Bary b{};
  for (int i = 0; i <= dim; ++i) b[i] = 1.0 / (dim + 1);
  return b;
}

std::string failure_text(const NewtonReport& r) {
  std::ostringstream os;
  os << "Newton did not converge after " << r.iterations << " iterations (residual "
     << r.final_residual << ")";
  return os.str();
}

bool sized(const DiscreteField& f, const FESpace& s) {
  return f.space && f.coeffs.size() == s.n_dofs();
}

}  // namespace

Discretization::Discretization(std::shared_ptr<const SimplicialMesh> m) : mesh(std::move(m)) {
  if (!mesh) throw std::invalid_argument("Discretization needs a mesh");
  W = std::make_shared<FESpace>(mesh, 1, 1);
  V = std::make_shared<FESpace>(mesh, 2, 1);
  Vvec = std::make_shared<FESpace>(mesh, 2, mesh->dim());
  Wvec = std::make_shared<FESpace>(mesh, 1, mesh->dim());
}

void TimeGrid::validate() const {
  if (!(T_end > 0.0) || !std::isfinite(T_end)) throw std::invalid_argument("T_end must be > 0");
  if (N < 1) throw std::invalid_argument("N must be >= 1");
}

CoupledStepper::CoupledStepper(std::shared_ptr<const SimplicialMesh> mesh, NondimParams params,
                               ModelVariant variant, ProblemData data, SolverSettings settings)
    : disc_(std::move(mesh)),
      params_(params),
      variant_(variant),
      data_(std::move(data)),
      settings_(settings),
      mag_assembler_(DofLayout({disc_.V})),
      flow_assembler_(DofLayout({disc_.Vvec, disc_.W})),
      transport_assembler_(DofLayout({disc_.W})) {
  params_.validate();
  if (settings_.workers < 1) throw std::invalid_argument("workers must be >= 1");
  mass_W_ = assemble_bilinear(disc_.W, disc_.W, mass_kernel(disc_.W), settings_.workers);
  laplace_W_ = assemble_bilinear(disc_.W, disc_.W, stiffness_kernel(disc_.W), settings_.workers);

  const int dim = disc_.dim();
  auto V = disc_.V;
  mag_assembler_.assemble(
      [V, dim] {
        auto cv = std::make_shared<CellValues>(*V, quadrature_rule(dim, 2));
        return [cv](std::size_t cell, std::span<double>, std::span<double> be) {
          cv->reinit(cell);
          for (int q = 0; q < cv->n_q(); ++q)
            for (int a = 0; a < cv->n_basis(); ++a) be[a] += cv->phi(q, a) * cv->JxW(q);
        };
      },
      nullptr, &mean_vector_, settings_.workers);

  outflow_pressure_dofs_ = disc_.W->boundary_dofs({BoundaryTag::Outflow});
  enclosed_ = outflow_pressure_dofs_.empty() ||
              data_.velocity_dirichlet.count(BoundaryTag::Outflow) > 0;
  const auto& m = *disc_.mesh;
  cell_facets_.assign(m.n_cells(), {});
  for (std::size_t f = 0; f < m.n_boundary_facets(); ++f)
    cell_facets_[m.facet_cell(f)].push_back(static_cast<int>(f));
}

// ---------------------------------------------------------------- potential

Vector CoupledStepper::boundary_flux_vector() {
  if (flux_vector_) return *flux_vector_;
  const auto& m = *disc_.mesh;
  const FESpace& V = *disc_.V;
  Vector b(V.n_dofs(), 0.0);
  FacetValues fv(V, 6);
  double net = 0.0, total = 0.0;
  for (std::size_t f = 0; f < m.n_boundary_facets(); ++f) {
    fv.reinit(f);
    const auto dofs = fv.dofs();
    for (int q = 0; q < fv.n_q(); ++q) {
      const double bn = dot3(data_.external_field(fv.point(q)), fv.normal());
      net += bn * fv.JxW(q);
      total += std::abs(bn) * fv.JxW(q);
      for (int a = 0; a < fv.n_basis(); ++a) b[dofs[a]] += bn * fv.phi(q, a) * fv.JxW(q);
    }
  }
  if (std::abs(net) > 1e-6 * total) {
    std::ostringstream os;
    os << "net boundary flux of the external field is " << net << " (absolute flux " << total
       << ")";
    throw IllPosedError(os.str());
  }
  flux_vector_ = b;
  return b;
}

SparseMatrix CoupledStepper::augment(const SparseMatrix& K) const {
  const std::size_t n = K.n_rows();
  std::vector<std::size_t> rp(n + 2, 0);
  std::vector<int> ci;
  std::vector<double> vals;
  ci.reserve(K.nnz() + 2 * n + 1);
  vals.reserve(K.nnz() + 2 * n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = K.row_ptr()[i]; k < K.row_ptr()[i + 1]; ++k) {
      ci.push_back(K.col_idx()[k]);
      vals.push_back(K.values()[k]);
    }
    ci.push_back(static_cast<int>(n));
    vals.push_back(mean_vector_[i]);
    rp[i + 1] = ci.size();
  }
  for (std::size_t j = 0; j < n; ++j) {
    ci.push_back(static_cast<int>(j));
    vals.push_back(mean_vector_[j]);
  }
  ci.push_back(static_cast<int>(n));
  vals.push_back(0.0);
  rp[n + 1] = ci.size();
  return SparseMatrix(n + 1, n + 1, std::move(rp), std::move(ci), std::move(vals));
}

NonlinearProblem CoupledStepper::potential_problem(const DiscreteField& u_prev,
                                                   Coefficient mode) {
  if (!sized(u_prev, *disc_.W)) throw std::invalid_argument("u must live on the P1 space");
  const Vector flux = boundary_flux_vector();
  const std::size_t n = disc_.V->n_dofs();
  const int dim = disc_.dim();
  const bool nonlinear = variant_.magnet_response && mode == Coefficient::Full;
  const bool weak = variant_.magnet_response && mode == Coefficient::WeakField;
  const NondimParams P = params_;
  auto V = disc_.V;
  auto W = disc_.W;
  const Vector u = u_prev.coeffs;
  const int workers = settings_.workers;

  // kernel filling residual and/or Jacobian of the potential block
  auto factory_for = [=](std::span<const double> phi) -> KernelFactory {
    return [=] {
      const auto& rule = quadrature_rule(dim, kCellOrder);
      auto cv = std::make_shared<CellValues>(*V, rule);
      auto cw = std::make_shared<CellValues>(*W, rule);
      return [=](std::size_t cell, std::span<double> Ae, std::span<double> be) {
        cv->reinit(cell);
        cw->reinit(cell);
        const int nb = cv->n_basis();
        for (int q = 0; q < cv->n_q(); ++q) {
          const Grad gp = cv->gradient(phi, q);
          const double w = cv->JxW(q);
          double a = 1.0, c = 0.0;
          if (nonlinear) {
            const double up = std::max(cw->value(u, q), 0.0);
            const double alpha = P.xi_bar * norm3(gp);
            a += P.M_bar * up * P.xi_bar * langevin_hat(alpha);
            c = P.M_bar * up * P.xi_bar * P.xi_bar * P.xi_bar * langevin_hat_slope(alpha);
          } else if (weak) {
            a += P.M_bar * std::max(cw->value(u, q), 0.0) * P.xi_bar / 3.0;
          }
          for (int i = 0; i < nb; ++i) {
            const Grad& gi = cv->grad(q, i);
            if (!be.empty()) be[i] += a * dot3(gp, gi) * w;
            if (Ae.empty()) continue;
            const double pi = dot3(gp, gi);
            for (int j = 0; j < nb; ++j) {
              const Grad& gj = cv->grad(q, j);
              Ae[i * nb + j] += (a * dot3(gi, gj) + c * pi * dot3(gp, gj)) * w;
            }
          }
        }
      };
    };
  };

  NonlinearProblem prob;
  const Assembler* asmb = &mag_assembler_;
  const Vector mvec = mean_vector_;
  prob.residual = [=](std::span<const double> x, std::span<double> F) {
    Vector r;
    asmb->assemble(factory_for(x.subspan(0, n)), nullptr, &r, workers);
    const double lambda = x[n];
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      F[i] = r[i] + flux[i] + lambda * mvec[i];
      mean += mvec[i] * x[i];
    }
    F[n] = mean;
  };
  prob.jacobian = [=, this](std::span<const double> x) {
    SparseMatrix K = asmb->make_matrix();
    asmb->assemble(factory_for(x.subspan(0, n)), &K, nullptr, workers);
    return augment(K);
  };
  return prob;
}

NonlinearProblem CoupledStepper::magnetostatics_problem(const DiscreteField& u_prev) {
  return potential_problem(u_prev, Coefficient::Full);
}

LinearSolve CoupledStepper::potential_linear_solve() const {
  const Vector m = mean_vector_;
  const double vol = std::accumulate(m.begin(), m.end(), 0.0);
  const LinearSolverConfig cfg = settings_.magnetostatics;
  return [m, vol, cfg](const SparseMatrix& J, std::span<const double> rhs, std::span<double> dx) {
    const std::size_t n = m.size();
    const SparseMatrix K = J.block(0, n, 0, n);
    // The potential block annihilates constants, so the multiplier is fixed
    // by the compatibility of the first block row.
    double lambda = 0.0;
    for (std::size_t i = 0; i < n; ++i) lambda += rhs[i];
    lambda /= vol;
    Vector b(n), d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) b[i] = rhs[i] - lambda * m[i];
    const Preconditioner M = cfg.preconditioner == PreconditionerKind::ILU0
                                 ? make_ilu0(K, kPotentialShift)
                                 : make_preconditioner(cfg.preconditioner, {&K, nullptr, 0.0});
    SolveReport rep = cfg.method == KrylovMethod::CG ? solve_cg(K, b, d, cfg, M)
                                                     : solve_gmres(K, b, d, cfg, M);
    const double shift = (rhs[n] - dot(m, d)) / vol;
    for (std::size_t i = 0; i < n; ++i) dx[i] = d[i] + shift;
    dx[n] = lambda;
    return rep;
  };
}

DiscreteField CoupledStepper::solve_magnetostatics(const DiscreteField& u_prev,
                                                   const DiscreteField* guess) {
  const std::size_t n = disc_.V->n_dofs();
  Vector x(n + 1, 0.0);
  const LinearSolve lin = potential_linear_solve();
  NewtonReport rep;
  try {
    const NonlinearProblem full = potential_problem(u_prev, Coefficient::Full);
    const bool have_guess = guess && sized(*guess, *disc_.V);
    if (have_guess) {
      std::copy(guess->coeffs.begin(), guess->coeffs.end(), x.begin());
      try {
        rep = newton_solve(full, x, settings_.newton, lin);
      } catch (const LinearSolverError&) {
        rep.converged = false;
      }
      if (rep.converged) {
        stats_.magnetostatics = rep;
        x.resize(n);
        return DiscreteField(disc_.V, std::move(x));
      }
    }
    // Start from whichever constant-coefficient solution fits best.
    Vector F(n + 1);
    double best = std::numeric_limits<double>::infinity();
    const std::vector<Coefficient> modes =
        variant_.magnet_response
            ? std::vector<Coefficient>{Coefficient::Unit, Coefficient::WeakField}
            : std::vector<Coefficient>{Coefficient::Unit};
    for (Coefficient mode : modes) {
      Vector y(n + 1, 0.0);
      rep = newton_solve(potential_problem(u_prev, mode), y, settings_.newton, lin);
      if (!rep.converged) throw StepFailure("magnetostatics", failure_text(rep));
      full.residual(y, F);
      const double r = norm2(F);
      if (r < best) {
        best = r;
        x = y;
      }
    }
    if (variant_.magnet_response) rep = newton_solve(full, x, settings_.newton, lin);
  } catch (const LinearSolverError& e) {
    throw StepFailure("magnetostatics", e.what());
  }
  stats_.magnetostatics = rep;
  if (!rep.converged) throw StepFailure("magnetostatics", failure_text(rep));
  x.resize(n);
  return DiscreteField(disc_.V, std::move(x));
}

DiscreteField CoupledStepper::project_field_strength(const DiscreteField& phi) {
  if (!sized(phi, *disc_.V)) throw std::invalid_argument("phi must live on the P2 space");
  const int dim = disc_.dim();
  try {
    return l2_project(
        [&phi, dim](std::size_t cell, const Bary& b, const Point&, std::span<double> out) {
          const Grad g = phi.gradient(cell, b);
          for (int i = 0; i < dim; ++i) out[i] = -g[i];
        },
        disc_.Wvec, settings_.projection, &mass_W_, kCellOrder);
  } catch (const LinearSolverError& e) {
    throw StepFailure("projection", e.what());
  }
}

// ---------------------------------------------------------------- flow

DirichletConstraint CoupledStepper::flow_constraints(double t) const {
  const FESpace& Vv = *disc_.Vvec;
  const std::size_t ns = Vv.n_scalar_dofs();
  const int dim = disc_.dim();
  DirichletConstraint c;
  const auto dofs = Vv.boundary_dofs(data_.velocity_dirichlet);
  for (int comp = 0; comp < dim; ++comp)
    for (int d : dofs) {
      const Vec3 g = data_.velocity_bc(t, Vv.dof_point(d));
      c.dofs.push_back(static_cast<int>(comp * ns + d));
      c.values.push_back(g[comp]);
    }
  if (enclosed_) {
    c.dofs.push_back(static_cast<int>(Vv.n_dofs()));
    c.values.push_back(0.0);
  }
  return c;
}

NonlinearProblem CoupledStepper::navier_stokes_problem(const State& prev, const DiscreteField& h,
                                                       std::optional<double> tau, double t,
                                                       bool convection) {
  if (!sized(prev.u, *disc_.W)) throw std::invalid_argument("u must live on the P1 space");
  if (!sized(h, *disc_.Wvec)) throw std::invalid_argument("h must live on the P1 vector space");
  if (tau && !(*tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  const int dim = disc_.dim();
  const std::size_t nu = disc_.Vvec->n_dofs(), np = disc_.W->n_dofs();
  const NondimParams P = params_;
  const bool fluid = variant_.fluid_response;
  const double inv_tau = tau ? 1.0 / *tau : 0.0;
  const Vector u = prev.u.coeffs;
  const Vector hc = h.coeffs;
  const Vector vold = sized(prev.v, *disc_.Vvec) ? prev.v.coeffs : Vector(nu, 0.0);
  auto Vv = disc_.Vvec;
  auto W = disc_.W;
  auto Wv = disc_.Wvec;
  const int workers = settings_.workers;

  auto factory_for = [=](std::span<const double> x) -> KernelFactory {
    return [=] {
      const auto& rule = quadrature_rule(dim, kCellOrder);
      auto cv = std::make_shared<CellValues>(*Vv, rule);
      auto cw = std::make_shared<CellValues>(*W, rule);
      auto ch = std::make_shared<CellValues>(*Wv, rule);
      return [=](std::size_t cell, std::span<double> Ae, std::span<double> be) {
        cv->reinit(cell);
        cw->reinit(cell);
        ch->reinit(cell);
        const int nbv = cv->n_basis(), nbw = cw->n_basis();
        const int nl = dim * nbv + nbw;
        const auto xv = sub(x, 0, nu), xp = sub(x, nu, np);
        for (int q = 0; q < cv->n_q(); ++q) {
          const double w = cv->JxW(q);
          const double uq = cw->value(u, q);
          double rho = 1.0, eta = 1.0;
          Vec3 j{}, f{};
          if (fluid) {
            rho = mixture_density(uq, P);
            eta = mixture_viscosity(uq);
            const Vec3 hq = vector_value(*ch, hc, q, dim);
            const Tensor Gh = vector_gradient(*ch, hc, q, dim);
            j = flux_vprel_hat(uq, cw->gradient(u, q), hq, Gh, P);
            f = body_force(uq, hq, Gh, P);
          }
          const Vec3 v = vector_value(*cv, xv, q, dim);
          const Vec3 vo = vector_value(*cv, vold, q, dim);
          const Tensor Gv = vector_gradient(*cv, xv, q, dim);
          const double p = cw->value(xp, q);
          Vec3 beta{};
          for (int i = 0; i < dim; ++i)
            beta[i] = convection ? rho * v[i] + (P.rho_ratio - 1.0) * j[i] : 0.0;
          const Vec3 conv = directional(Gv, beta);
          double divv = 0.0;
          for (int i = 0; i < dim; ++i) divv += Gv[4 * i];
          const double nu_eff = 2.0 * eta / P.Re;

          if (!be.empty()) {
            for (int i = 0; i < dim; ++i)
              for (int a = 0; a < nbv; ++a) {
                const double pa = cv->phi(q, a);
                const Grad& ga = cv->grad(q, a);
                double visc = 0.0;
                for (int k = 0; k < dim; ++k)
                  visc += 0.5 * (Gv[3 * i + k] + Gv[3 * k + i]) * ga[k];
                be[i * nbv + a] += (rho * inv_tau * (v[i] - vo[i]) * pa + conv[i] * pa +
                                    nu_eff * visc - p * ga[i] - f[i] * pa) *
                                   w;
              }
            for (int b = 0; b < nbw; ++b) be[dim * nbv + b] -= cw->phi(q, b) * divv * w;
          }
          if (Ae.empty()) continue;
          const double visc_c = eta / P.Re;
          for (int a = 0; a < nbv; ++a) {
            const double pa = cv->phi(q, a);
            const Grad& ga = cv->grad(q, a);
            for (int c = 0; c < nbv; ++c) {
              const double pc = cv->phi(q, c);
              const Grad& gc = cv->grad(q, c);
              const double diag = rho * inv_tau * pc * pa + dot3(beta, gc) * pa +
                                  visc_c * dot3(gc, ga);
              for (int i = 0; i < dim; ++i) {
                double* row = &Ae[(i * nbv + a) * nl];
                for (int k = 0; k < dim; ++k) {
                  double val = visc_c * gc[i] * ga[k];
                  if (convection) val += rho * pc * Gv[3 * i + k] * pa;
                  if (i == k) val += diag;
                  row[k * nbv + c] += val * w;
                }
              }
            }
            for (int i = 0; i < dim; ++i)
              for (int d = 0; d < nbw; ++d)
                Ae[(i * nbv + a) * nl + dim * nbv + d] -= cw->phi(q, d) * ga[i] * w;
          }
          for (int b = 0; b < nbw; ++b) {
            const double pb = cw->phi(q, b);
            for (int k = 0; k < dim; ++k)
              for (int c = 0; c < nbv; ++c)
                Ae[(dim * nbv + b) * nl + k * nbv + c] -= pb * cv->grad(q, c)[k] * w;
          }
        }
      };
    };
  };

  const DirichletConstraint bc = flow_constraints(t);
  const Assembler* asmb = &flow_assembler_;
  NonlinearProblem prob;
  prob.residual = [=](std::span<const double> x, std::span<double> F) {
    Vector r;
    asmb->assemble(factory_for(x), nullptr, &r, workers);
    std::copy(r.begin(), r.end(), F.begin());
    for (std::size_t k = 0; k < bc.dofs.size(); ++k) F[bc.dofs[k]] = x[bc.dofs[k]] - bc.values[k];
  };
  prob.jacobian = [=](std::span<const double> x) {
    SparseMatrix J = asmb->make_matrix();
    asmb->assemble(factory_for(x), &J, nullptr, workers);
    Vector dummy(J.n_rows(), 0.0);
    apply_dirichlet(J, dummy, bc, DirichletMode::RowReplacement);
    return J;
  };
  return prob;
}

std::shared_ptr<PcdOperators> CoupledStepper::pcd_operators(const SparseMatrix& J,
                                                            std::span<const double> x,
                                                            const State& prev,
                                                            const DiscreteField& h,
                                                            std::optional<double> tau) {
  const std::size_t nu = disc_.Vvec->n_dofs(), np = disc_.W->n_dofs();
  auto ops = std::make_shared<PcdOperators>();
  ops->F = J.block(0, nu, 0, nu);
  ops->Bt = J.block(0, nu, nu, nu + np);
  ops->Mp = mass_W_;
  ops->velocity_solve = settings_.pcd_velocity;
  ops->laplace_solve = settings_.pcd_laplace;

  DirichletConstraint pc;
  if (enclosed_) {
    pc.dofs = {0};
    ops->fixed_pressure_dofs = {0};
  } else {
    pc.dofs = outflow_pressure_dofs_;
  }
  pc.values.assign(pc.dofs.size(), 0.0);
  ops->Ap = laplace_W_;
  Vector dummy(np, 0.0);
  apply_dirichlet(ops->Ap, dummy, pc, DirichletMode::SymmetricElimination);

  const int dim = disc_.dim();
  const NondimParams P = params_;
  const bool fluid = variant_.fluid_response;
  const double inv_tau = tau ? 1.0 / *tau : 0.0;
  const Vector u = prev.u.coeffs;
  const Vector hc = h.coeffs;
  const auto xv = x.subspan(0, nu);
  auto Vv = disc_.Vvec;
  auto W = disc_.W;
  auto Wv = disc_.Wvec;
  ops->Fp = transport_assembler_.make_matrix();
  transport_assembler_.assemble(
      [=] {
        const auto& rule = quadrature_rule(dim, kCellOrder);
        auto cv = std::make_shared<CellValues>(*Vv, rule);
        auto cw = std::make_shared<CellValues>(*W, rule);
        auto ch = std::make_shared<CellValues>(*Wv, rule);
        return [=](std::size_t cell, std::span<double> Ae, std::span<double>) {
          cv->reinit(cell);
          cw->reinit(cell);
          ch->reinit(cell);
          const int nb = cw->n_basis();
          for (int q = 0; q < cw->n_q(); ++q) {
            const double w = cw->JxW(q);
            const double uq = cw->value(u, q);
            double rho = 1.0, eta = 1.0;
            Vec3 j{};
            if (fluid) {
              rho = mixture_density(uq, P);
              eta = mixture_viscosity(uq);
              j = flux_vprel_hat(uq, cw->gradient(u, q), vector_value(*ch, hc, q, dim),
                                 vector_gradient(*ch, hc, q, dim), P);
            }
            const Vec3 v = vector_value(*cv, xv, q, dim);
            Vec3 beta{};
            for (int i = 0; i < dim; ++i) beta[i] = rho * v[i] + (P.rho_ratio - 1.0) * j[i];
            for (int a = 0; a < nb; ++a)
              for (int b = 0; b < nb; ++b)
                Ae[a * nb + b] += (rho * inv_tau * cw->phi(q, a) * cw->phi(q, b) +
                                   eta / P.Re * dot3(cw->grad(q, a), cw->grad(q, b)) +
                                   dot3(beta, cw->grad(q, b)) * cw->phi(q, a)) *
                                  w;
          }
        };
      },
      &ops->Fp, nullptr, settings_.workers);
  apply_dirichlet(ops->Fp, dummy, pc, DirichletMode::RowReplacement);
  return ops;
}

std::pair<DiscreteField, DiscreteField> CoupledStepper::solve_navier_stokes(
    const State& prev, const DiscreteField& h, std::optional<double> tau, double t) {
  const std::size_t nu = disc_.Vvec->n_dofs(), np = disc_.W->n_dofs();
  Vector x(nu + np, 0.0);
  if (sized(prev.v, *disc_.Vvec)) std::copy(prev.v.coeffs.begin(), prev.v.coeffs.end(), x.begin());
  if (sized(prev.p, *disc_.W))
    std::copy(prev.p.coeffs.begin(), prev.p.coeffs.end(), x.begin() + nu);
  const DirichletConstraint bc = flow_constraints(t);
  for (std::size_t k = 0; k < bc.dofs.size(); ++k) x[bc.dofs[k]] = bc.values[k];

  LinearSolverConfig cfg = settings_.navier_stokes;
  const LinearSolve lin = [&](const SparseMatrix& J, std::span<const double> rhs,
                              std::span<double> dx) {
    if (cfg.preconditioner != PreconditionerKind::BlockPCD) return solve_linear(J, rhs, dx, cfg);
    const auto ops = pcd_operators(J, x, prev, h, tau);
    return solve_gmres(J, rhs, dx, cfg, make_block_pcd(ops));
  };
  NewtonReport rep;
  try {
    if (!tau) {
      rep = newton_solve(navier_stokes_problem(prev, h, tau, t, false), x, settings_.newton, lin);
      if (!rep.converged) throw StepFailure("navier_stokes", "Stokes guess: " + failure_text(rep));
    }
    rep = newton_solve(navier_stokes_problem(prev, h, tau, t, true), x, settings_.newton, lin);
  } catch (const LinearSolverError& e) {
    throw StepFailure("navier_stokes", e.what());
  }
  stats_.navier_stokes = rep;
  if (!rep.converged) throw StepFailure("navier_stokes", failure_text(rep));
  Vector pv(x.begin() + nu, x.end());
  x.resize(nu);
  return {DiscreteField(disc_.Vvec, std::move(x)), DiscreteField(disc_.W, std::move(pv))};
}

// ---------------------------------------------------------------- transport

NonlinearProblem CoupledStepper::transport_problem(const DiscreteField& u_prev,
                                                   const DiscreteField& v,
                                                   const DiscreteField& h, double tau, double t) {
  if (!sized(u_prev, *disc_.W)) throw std::invalid_argument("u must live on the P1 space");
  if (!sized(v, *disc_.Vvec)) throw std::invalid_argument("v must live on the P2 vector space");
  if (!sized(h, *disc_.Wvec)) throw std::invalid_argument("h must live on the P1 vector space");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  const int dim = disc_.dim();
  const NondimParams P = params_;
  const double cdrift = 1.0 / (P.Ke_star * P.Ke_star);
  const double inv_tau = 1.0 / tau;
  const bool sd = settings_.streamline_diffusion;
  const bool closed = data_.closed_transport;
  const Vector uold = u_prev.coeffs;
  const Vector vc = v.coeffs, hc = h.coeffs;
  const DiscreteField vf = v, hf = h;
  auto Vv = disc_.Vvec;
  auto W = disc_.W;
  auto Wv = disc_.Wvec;
  auto mesh = disc_.mesh;
  const auto* facets = &cell_facets_;
  const auto inflow = data_.inflow_u;
  const int workers = settings_.workers;

  auto factory_for = [=](std::span<const double> x) -> KernelFactory {
    return [=] {
      const auto& rule = quadrature_rule(dim, kCellOrder);
      auto cv = std::make_shared<CellValues>(*Vv, rule);
      auto cw = std::make_shared<CellValues>(*W, rule);
      auto ch = std::make_shared<CellValues>(*Wv, rule);
      auto fv = std::make_shared<FacetValues>(*Vv, kFacetOrder);
      auto fw = std::make_shared<FacetValues>(*W, kFacetOrder);
      auto fh = std::make_shared<FacetValues>(*Wv, kFacetOrder);
      const Bary mid = centroid(dim);
      return [=](std::size_t cell, std::span<double> Ae, std::span<double> be) {
        cv->reinit(cell);
        cw->reinit(cell);
        ch->reinit(cell);
        const int nb = cw->n_basis();
        double delta = 0.0;
        if (sd) {
          const Vec3 gm = magnetic_drift(vector_value_at(hf, cell, mid, dim),
                                         field_gradient(hf, cell, mid, dim), P);
          Vec3 vsd{};
          for (int i = 0; i < dim; ++i) vsd[i] = vf.value(cell, mid, i) + cdrift * gm[i];
          const double hK = std::pow(cw->volume(), 1.0 / dim);
          delta = hK / (4.0 / (hK * P.Pe) + 2.0 * norm3(vsd));
        }
        for (int q = 0; q < cw->n_q(); ++q) {
          const double w = cw->JxW(q);
          const double uq = cw->value(x, q);
          const Grad gu = cw->gradient(x, q);
          const double uo = cw->value(uold, q);
          const Vec3 vq = vector_value(*cv, vc, q, dim);
          const Vec3 g = magnetic_drift(vector_value(*ch, hc, q, dim),
                                        vector_gradient(*ch, hc, q, dim), P);
          Vec3 F{}, dF{}, vsd{};
          const double mob = drift_mobility(uq), dmob = drift_mobility_slope(uq);
          for (int i = 0; i < dim; ++i) {
            F[i] = uq * vq[i] + cdrift * mob * g[i];
            dF[i] = vq[i] + cdrift * dmob * g[i];
            vsd[i] = vq[i] + cdrift * g[i];
          }
          const double sgu = dot3(vsd, gu);
          for (int a = 0; a < nb; ++a) {
            const double pa = cw->phi(q, a);
            const Grad& ga = cw->grad(q, a);
            const double sga = dot3(vsd, ga);
            if (!be.empty())
              be[a] += (inv_tau * (uq - uo) * pa - dot3(F, ga) + dot3(gu, ga) / P.Pe +
                        delta * sgu * sga) *
                       w;
            if (Ae.empty()) continue;
            const double dfa = dot3(dF, ga);
            for (int b = 0; b < nb; ++b) {
              const double pb = cw->phi(q, b);
              const Grad& gb = cw->grad(q, b);
              Ae[a * nb + b] += (inv_tau * pb * pa - pb * dfa + dot3(gb, ga) / P.Pe +
                                 delta * dot3(vsd, gb) * sga) *
                                w;
            }
          }
        }
        if (closed) return;
        for (int f : (*facets)[cell]) {
          const BoundaryTag tag = mesh->boundary_facets()[f].tag;
          if (tag == BoundaryTag::Wall) continue;
          fv->reinit(f);
          fw->reinit(f);
          const Point& n = fw->normal();
          if (tag == BoundaryTag::Inflow) {
            if (be.empty()) continue;
            for (int q = 0; q < fw->n_q(); ++q) {
              const double vn = dot3(vector_value(*fv, vc, q, dim), n);
              const double s = inflow(t, fw->point(q)) * vn * fw->JxW(q);
              for (int a = 0; a < nb; ++a) be[a] += s * fw->phi(q, a);
            }
            continue;
          }
          // Only outgoing parts of the flux cross the outflow boundary; nothing
          // enters from outside. v and g are fixed here, so this stays smooth in u.
          fh->reinit(f);
          for (int q = 0; q < fw->n_q(); ++q) {
            const double uq = fw->value(x, q);
            const double vn = std::max(dot3(vector_value(*fv, vc, q, dim), n), 0.0);
            const Vec3 g = magnetic_drift(vector_value(*fh, hc, q, dim),
                                          vector_gradient(*fh, hc, q, dim), P);
            const double gn = cdrift * std::max(dot3(g, n), 0.0);
            const double Fn = uq * vn + drift_mobility(uq) * gn;
            const double dFn = vn + drift_mobility_slope(uq) * gn;
            const double wq = fw->JxW(q);
            for (int a = 0; a < nb; ++a) {
              const double pa = fw->phi(q, a);
              if (!be.empty()) be[a] += Fn * pa * wq;
              if (Ae.empty()) continue;
              for (int b = 0; b < nb; ++b) Ae[a * nb + b] += dFn * fw->phi(q, b) * pa * wq;
            }
          }
        }
      };
    };
  };

  const Assembler* asmb = &transport_assembler_;
  NonlinearProblem prob;
  prob.residual = [=](std::span<const double> x, std::span<double> F) {
    Vector r;
    asmb->assemble(factory_for(x), nullptr, &r, workers);
    std::copy(r.begin(), r.end(), F.begin());
  };
  prob.jacobian = [=](std::span<const double> x) {
    SparseMatrix J = asmb->make_matrix();
    asmb->assemble(factory_for(x), &J, nullptr, workers);
    return J;
  };
  return prob;
}

DiscreteField CoupledStepper::solve_transport(const DiscreteField& u_prev, const DiscreteField& v,
                                              const DiscreteField& h, double tau, double t) {
  const NonlinearProblem prob = transport_problem(u_prev, v, h, tau, t);
  Vector x = u_prev.coeffs;
  NewtonReport rep;
  try {
    rep = newton_solve(prob, x, settings_.newton, settings_.transport);
  } catch (const LinearSolverError& e) {
    throw StepFailure("transport", e.what());
  }
  stats_.transport = rep;
  if (!rep.converged) throw StepFailure("transport", failure_text(rep));
  return DiscreteField(disc_.W, std::move(x));
}

// ---------------------------------------------------------------- stepping

void CoupledStepper::check_bounds(const DiscreteField& u) {
  const auto [lo, hi] = std::minmax_element(u.coeffs.begin(), u.coeffs.end());
  stats_.u_min = *lo;
  stats_.u_max = *hi;
  stats_.bounds_warning = *lo < -0.01 || *hi > 1.01;
  if (stats_.bounds_warning && on_warning) {
    std::ostringstream os;
    os << "volume fraction left [-0.01, 1.01]: min " << *lo << ", max " << *hi;
    on_warning(os.str());
  }
}

State CoupledStepper::initialize() {
  stats_ = {};
  State s;
  s.k = 0;
  s.t = 0.0;
  s.u = interpolate(disc_.W, data_.initial_u);
  trace_.push_back("magnetostatics[u:0]");
  s.phi = solve_magnetostatics(s.u);
  trace_.push_back("projection[phi:0]");
  s.h = project_field_strength(s.phi);
  trace_.push_back("navier_stokes[u:0,h:0,stationary]");
  std::tie(s.v, s.p) = solve_navier_stokes(s, s.h, std::nullopt, 0.0);
  check_bounds(s.u);
  stats_.div_norm = discrete_divergence(s.v);
  return s;
}

State CoupledStepper::advance(const State& prev, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("tau must be > 0");
  stats_ = {};
  State s;
  s.k = prev.k + 1;
  s.t = prev.t + tau;
  const std::string kp = std::to_string(prev.k), kn = std::to_string(s.k);

  trace_.push_back("magnetostatics[u:" + kp + "]");
  if (!variant_.magnet_response && data_.static_data && sized(prev.phi, *disc_.V))
    s.phi = prev.phi;
  else
    s.phi = solve_magnetostatics(prev.u, &prev.phi);

  trace_.push_back("projection[phi:" + kn + "]");
  if (!variant_.magnet_response && data_.static_data && sized(prev.h, *disc_.Wvec))
    s.h = prev.h;
  else
    s.h = project_field_strength(s.phi);

  trace_.push_back("navier_stokes[u:" + kp + ",h:" + kn + "]");
  if (!variant_.fluid_response && data_.static_data && sized(prev.v, *disc_.Vvec) &&
      sized(prev.p, *disc_.W)) {
    s.v = prev.v;
    s.p = prev.p;
  } else {
    std::tie(s.v, s.p) = solve_navier_stokes(prev, s.h, tau, s.t);
  }

  trace_.push_back("transport[u:" + kp + ",v:" + kn + ",h:" + kn + "]");
  s.u = solve_transport(prev.u, s.v, s.h, tau, s.t);
  check_bounds(s.u);
  stats_.div_norm = discrete_divergence(s.v);
  return s;
}

double CoupledStepper::discrete_divergence(const DiscreteField& v) {
  if (!sized(v, *disc_.Vvec)) throw std::invalid_argument("v must live on the P2 vector space");
  const int dim = disc_.dim();
  auto Vv = disc_.Vvec;
  auto W = disc_.W;
  const Vector vc = v.coeffs;
  Vector b;
  transport_assembler_.assemble(
      [=] {
        const auto& rule = quadrature_rule(dim, kCellOrder);
        auto cv = std::make_shared<CellValues>(*Vv, rule);
        auto cw = std::make_shared<CellValues>(*W, rule);
        return [=](std::size_t cell, std::span<double>, std::span<double> be) {
          cv->reinit(cell);
          cw->reinit(cell);
          for (int q = 0; q < cw->n_q(); ++q) {
            double div = 0.0;
            for (int i = 0; i < dim; ++i) div += cv->gradient(vc, q, i)[i];
            for (int a = 0; a < cw->n_basis(); ++a) be[a] += div * cw->phi(q, a) * cw->JxW(q);
          }
        };
      },
      nullptr, &b, settings_.workers);
  Vector d(b.size(), 0.0);
  const SolveReport rep = solve_linear(mass_W_, b, d, settings_.projection);
  if (!rep.converged) throw LinearSolverError("divergence projection did not converge");
  return std::sqrt(std::max(dot(b, d), 0.0));
}

EnergyTerms CoupledStepper::energy_diagnostics(const State& s) const {
  const int dim = disc_.dim();
  const auto& rule = quadrature_rule(dim, kCellOrder);
  CellValues cw(*disc_.W, rule), cv(*disc_.Vvec, rule), ch(*disc_.Wvec, rule);
  EnergyTerms total;
  for (std::size_t cell = 0; cell < disc_.mesh->n_cells(); ++cell) {
    cw.reinit(cell);
    cv.reinit(cell);
    ch.reinit(cell);
    for (int q = 0; q < cw.n_q(); ++q) {
      PointFields f;
      f.u = cw.value(s.u.coeffs, q);
      f.grad_u = cw.gradient(s.u.coeffs, q);
      f.v = vector_value(cv, s.v.coeffs, q, dim);
      f.grad_v = vector_gradient(cv, s.v.coeffs, q, dim);
      f.h = vector_value(ch, s.h.coeffs, q, dim);
      f.grad_h = vector_gradient(ch, s.h.coeffs, q, dim);
      total.add(energy_density(f, params_, variant_), cw.JxW(q));
    }
  }
  return total;
}

}  // namespace mdt
