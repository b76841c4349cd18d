#include "doctest.h"

#include <cmath>
#include <random>

#include "mdt/stepper.hpp"

using namespace mdt;

namespace {

std::shared_ptr<const SimplicialMesh> channel(double L, double H, int nx, int ny) {
  return std::make_shared<const SimplicialMesh>(build_channel_2d(L, H, nx, ny));
}

// Field of a 2D line source outside the domain; divergence free inside, so
// its net flux through the boundary vanishes.
std::function<Vec3(const Point&)> source_field(double strength, Point x0) {
  return [=](const Point& x) {
    const double dx = x[0] - x0[0], dy = x[1] - x0[1];
    const double r2 = dx * dx + dy * dy;
    return Vec3{strength * dx / r2, strength * dy / r2, 0.0};
  };
}

Vec3 parabolic(const Point& x) {
  return x[0] < 1e-12 ? Vec3{4.0 * x[1] * (1.0 - x[1]), 0.0, 0.0} : Vec3{0, 0, 0};
}

double residual_fd_mismatch(const NonlinearProblem& prob, const Vector& x, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const std::size_t n = x.size();
  Vector d(n), F0(n), F1(n), xp(n);
  // direction scaled to the iterate so eps is a relative step
  double scale = 0.0;
  for (double v : x) scale = std::max(scale, std::abs(v));
  for (auto& v : d) v = std::max(scale, 1e-12) * U(rng);
  const double eps = 1e-7;
  for (std::size_t i = 0; i < n; ++i) xp[i] = x[i] + eps * d[i];
  prob.residual(x, F0);
  prob.residual(xp, F1);
  const Vector Jd = prob.jacobian(x) * d;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double fd = (F1[i] - F0[i]) / eps;
    num += (fd - Jd[i]) * (fd - Jd[i]);
    den += Jd[i] * Jd[i];
  }
  return std::sqrt(num / den);
}

DiscreteField random_p1(const std::shared_ptr<const FESpace>& s, double lo, double hi,
                        unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  DiscreteField f(s);
  for (auto& c : f.coeffs) c = U(rng);
  return f;
}

double total(const CoupledStepper& st, const DiscreteField& u) {
  // integral of a P1 field: the row sums of the mass matrix are the basis integrals
  const auto& W = *st.disc().W;
  const auto& mesh = W.mesh();
  double s = 0.0;
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    double avg = 0.0;
    for (int a = 0; a < W.n_local(); ++a) avg += u.coeffs[W.cell_dofs(c)[a]];
    s += mesh.cell_volume(c) * avg / W.n_local();
  }
  return s;
}

double l2_norm_gradient(const DiscreteField& v) {
  const auto& sp = *v.space;
  const auto& rule = quadrature_rule(sp.dim(), 4);
  CellValues cv(sp, rule);
  double s = 0.0;
  for (std::size_t c = 0; c < sp.mesh().n_cells(); ++c) {
    cv.reinit(c);
    for (int q = 0; q < cv.n_q(); ++q)
      for (int i = 0; i < sp.components(); ++i) {
        const Grad g = cv.gradient(v.coeffs, q, i);
        s += dot3(g, g) * cv.JxW(q);
      }
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("Jacobians of the three nonlinear systems match finite differences") {
  auto mesh = channel(4.0, 1.0, 6, 2);
  ProblemData data;
  data.external_field = source_field(2.0, {2.0, 2.5, 0.0});
  data.velocity_bc = [](double, const Point& x) { return parabolic(x); };
  CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
  const auto& D = st.disc();

  const DiscreteField u = random_p1(D.W, 0.1, 0.6, 1);
  SUBCASE("magnetostatics") {
    for (double scale : {1e-4, 1e-2, 1.0}) {
      Vector x(D.V->n_dofs() + 1);
      std::mt19937 rng(7);
      std::uniform_real_distribution<double> U(-1, 1);
      for (std::size_t i = 0; i < D.V->n_dofs(); ++i) {
        const Point p = D.V->dof_point(i);
        x[i] = scale * (p[1] + 0.3 * p[0] * p[0] + 0.05 * U(rng));
      }
      x.back() = 0.3 * scale;
      CHECK(residual_fd_mismatch(st.magnetostatics_problem(u), x, 3) < 1e-5);
    }
  }
  SUBCASE("navier-stokes") {
    State prev;
    prev.u = u;
    prev.v = random_p1(D.Vvec, -1, 1, 4);
    const DiscreteField h = random_p1(D.Wvec, 0.5, 3.0, 5);
    Vector x = random_p1(D.Vvec, -1, 1, 6).coeffs;
    const Vector p = random_p1(D.W, -1, 1, 8).coeffs;
    x.insert(x.end(), p.begin(), p.end());
    CHECK(residual_fd_mismatch(st.navier_stokes_problem(prev, h, 0.1, 0.1), x, 9) < 1e-5);
    CHECK(residual_fd_mismatch(st.navier_stokes_problem(prev, h, std::nullopt, 0.0), x, 10) <
          1e-5);
  }
  SUBCASE("transport") {
    const DiscreteField v = random_p1(D.Vvec, -1, 1, 11);
    const DiscreteField h = random_p1(D.Wvec, 0.5, 3.0, 12);
    const Vector x = random_p1(D.W, 0.0, 1.0, 13).coeffs;
    CHECK(residual_fd_mismatch(st.transport_problem(u, v, h, 0.1, 0.1), x, 14) < 1e-5);
  }
}

TEST_CASE("magnetostatics: constant coefficient, gauge and particle response") {
  auto mesh = channel(1.0, 1.0, 4, 4);
  ProblemData data;
  SUBCASE("uniform field gives an affine zero-mean potential") {
    data.external_field = [](const Point&) { return Vec3{0.0, 1.0, 0.0}; };
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const DiscreteField phi = st.solve_magnetostatics(DiscreteField(st.disc().W));
    for (std::size_t i = 0; i < st.disc().V->n_scalar_dofs(); ++i)
      CHECK(phi.at(i) == doctest::Approx(0.5 - st.disc().V->dof_point(i)[1]).epsilon(1e-8));
    const DiscreteField h = st.project_field_strength(phi);
    for (std::size_t i = 0; i < st.disc().Wvec->n_scalar_dofs(); ++i) {
      CHECK(std::abs(h.at(i, 0)) < 1e-8);
      CHECK(std::abs(h.at(i, 1) - 1.0) < 1e-8);
    }
  }
  SUBCASE("zero external field gives zero potential") {
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const DiscreteField phi = st.solve_magnetostatics(random_p1(st.disc().W, 0, 1, 2));
    for (double c : phi.coeffs) CHECK(c == 0.0);
  }
  SUBCASE("particles lower the field strength") {
    data.external_field = source_field(2.0, {0.5, 1.8, 0.0});
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const auto& D = st.disc();
    const DiscreteField phi0 = st.solve_magnetostatics(DiscreteField(D.W));
    const DiscreteField phi1 =
        st.solve_magnetostatics(interpolate(D.W, [](const Point&) { return 0.5; }));
    CHECK(l2_norm_gradient(phi1) < l2_norm_gradient(phi0));
  }
  SUBCASE("incompatible boundary flux is rejected") {
    data.external_field = [](const Point& x) { return Vec3{x[0], 0.0, 0.0}; };
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    CHECK_THROWS_AS(st.solve_magnetostatics(DiscreteField(st.disc().W)), IllPosedError);
  }
}

TEST_CASE("magnetostatics Newton converges fast at u = 0.5") {
  auto mesh = channel(8.0, 1.0, 16, 2);
  for (double strength : {20.0, 1.0, 0.3, 0.1, 1e-2, 1e-4}) {
    // at 0.3 |grad phi| is comparable to M_bar u and the coefficient
    // behaves like 1/|grad phi|; only convergence is required there
    const int budget = strength == 0.3 ? 15 : 8;
    CAPTURE(strength);
    ProblemData data;
    data.external_field = source_field(strength, {4.0, 3.0, 0.0});
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const DiscreteField u = interpolate(st.disc().W, [](const Point&) { return 0.5; });
    st.solve_magnetostatics(u);
    const NewtonReport& r = st.last_stats().magnetostatics;
    MESSAGE("strength " << strength << ": " << r.iterations << " iterations");
    CHECK(r.converged);
    CHECK(r.iterations <= budget);
    const auto& d = r.update_norms;
    if (d.size() < 3) continue;  // nearly linear, too few updates to judge the rate
    const double a = d[d.size() - 2], b = d.back();
    MESSAGE("final update norms " << a << " " << b);
    CHECK(b <= 10.0 * std::pow(a, 1.5));
  }
}

TEST_CASE("field projection") {
  auto mesh = channel(1.0, 1.0, 3, 3);
  CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, ProblemData{});
  const auto& D = st.disc();
  const DiscreteField h1 = st.project_field_strength(interpolate(D.V, [](const Point& x) {
    return x[0];
  }));
  for (std::size_t i = 0; i < D.Wvec->n_scalar_dofs(); ++i) {
    CHECK(h1.at(i, 0) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(std::abs(h1.at(i, 1)) < 1e-10);
  }
  const DiscreteField h0 =
      st.project_field_strength(interpolate(D.V, [](const Point&) { return 3.0; }));
  for (double c : h0.coeffs) CHECK(std::abs(c) < 1e-12);
}

TEST_CASE("field projection error decreases under refinement") {
  std::vector<double> errs;
  for (int n : {4, 8}) {
    auto mesh = channel(2.0, 1.0, 2 * n, n);
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, ProblemData{});
    const DiscreteField phi = interpolate(st.disc().V, [](const Point& x) {
      const double dx = x[0] - 1.0, dy = x[1] - 1.6;
      return dy / (dx * dx + dy * dy);
    });
    const DiscreteField h = st.project_field_strength(phi);
    const auto& rule = quadrature_rule(2, 6);
    CellValues cv(*st.disc().V, rule), ch(*st.disc().Wvec, rule);
    double e = 0.0;
    for (std::size_t c = 0; c < mesh->n_cells(); ++c) {
      cv.reinit(c);
      ch.reinit(c);
      for (int q = 0; q < cv.n_q(); ++q) {
        const Grad g = cv.gradient(phi.coeffs, q);
        for (int i = 0; i < 2; ++i) {
          const double d = ch.value(h.coeffs, q, i) + g[i];
          e += d * d * cv.JxW(q);
        }
      }
    }
    errs.push_back(std::sqrt(e));
  }
  CHECK(errs[1] < 0.5 * errs[0]);
}

TEST_CASE("stationary flow reproduces Poiseuille") {
  auto mesh = channel(4.0, 1.0, 8, 2);
  ProblemData data;
  const double vmax = 1.0, Re = 10.0;
  data.velocity_bc = [vmax](double, const Point& x) {
    return Vec3{vmax * 4.0 * x[1] * (1.0 - x[1]), 0.0, 0.0};
  };
  data.velocity_dirichlet = {BoundaryTag::Inflow, BoundaryTag::Wall, BoundaryTag::Outflow};
  CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
  const auto& D = st.disc();
  State s;
  s.u = DiscreteField(D.W);
  const auto [v, p] = st.solve_navier_stokes(s, DiscreteField(D.Wvec), std::nullopt, 0.0);
  for (std::size_t i = 0; i < D.Vvec->n_scalar_dofs(); ++i) {
    const Point x = D.Vvec->dof_point(i);
    CHECK(v.at(i, 0) == doctest::Approx(4.0 * vmax * x[1] * (1.0 - x[1])).epsilon(1e-8));
    CHECK(std::abs(v.at(i, 1)) < 1e-8);
  }
  // dp/dx1 = (1/Re) d^2 v1/dx2^2 = -8 vmax / Re
  const Point x0 = D.W->dof_point(0);
  for (std::size_t i = 0; i < D.W->n_scalar_dofs(); ++i) {
    const Point x = D.W->dof_point(i);
    CHECK(p.at(i) - p.at(0) == doctest::Approx(-8.0 * vmax / Re * (x[0] - x0[0])).epsilon(1e-7));
  }
}

TEST_CASE("do-nothing outflow stays close to Poiseuille") {
  auto mesh = channel(4.0, 1.0, 16, 4);
  ProblemData data;
  data.velocity_bc = [](double, const Point& x) { return parabolic(x); };
  CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
  const auto& D = st.disc();
  State s;
  s.u = DiscreteField(D.W);
  const auto [v, p] = st.solve_navier_stokes(s, DiscreteField(D.Wvec), std::nullopt, 0.0);
  double err = 0.0;
  for (std::size_t i = 0; i < D.Vvec->n_scalar_dofs(); ++i) {
    const Point x = D.Vvec->dof_point(i);
    if (x[0] > 2.0) continue;
    err = std::max(err, std::abs(v.at(i, 0) - 4.0 * x[1] * (1.0 - x[1])));
  }
  CHECK(err < 2e-2);
}

TEST_CASE("lid-driven cavity is discretely divergence free") {
  auto mesh = channel(1.0, 1.0, 8, 8);
  ProblemData data;
  data.velocity_bc = [](double, const Point& x) {
    return x[1] > 1.0 - 1e-12 ? Vec3{1.0, 0.0, 0.0} : Vec3{0, 0, 0};
  };
  data.velocity_dirichlet = {BoundaryTag::Inflow, BoundaryTag::Wall, BoundaryTag::Outflow};
  CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
  State s;
  s.u = DiscreteField(st.disc().W);
  const auto [v, p] = st.solve_navier_stokes(s, DiscreteField(st.disc().Wvec), std::nullopt, 0.0);
  CHECK(st.last_stats().navier_stokes.converged);
  CHECK(st.discrete_divergence(v) <= 1e-8 * l2_norm_gradient(v));

  SUBCASE("a huge time step reproduces the stationary solution") {
    State prev = s;
    prev.v = random_p1(st.disc().Vvec, -1, 1, 3);
    const auto [v2, p2] = st.solve_navier_stokes(prev, DiscreteField(st.disc().Wvec), 1e12, 0.0);
    double m = 0.0;
    for (std::size_t i = 0; i < v.coeffs.size(); ++i)
      m = std::max(m, std::abs(v.coeffs[i] - v2.coeffs[i]));
    CHECK(m < 1e-7);
  }
}

TEST_CASE("PCD preconditioning of the flow Jacobian") {
  auto iterations = [](int n, PreconditionerKind kind) {
    auto mesh = channel(4.0, 1.0, 4 * n, n);
    ProblemData data;
    data.velocity_bc = [](double, const Point& x) { return parabolic(x); };
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const auto& D = st.disc();
    State prev;
    prev.u = DiscreteField(D.W);
    prev.v = DiscreteField(D.Vvec);
    const DiscreteField h(D.Wvec);
    const NonlinearProblem prob = st.navier_stokes_problem(prev, h, 0.1, 0.1);
    const std::size_t N = D.Vvec->n_dofs() + D.W->n_dofs();
    Vector x(N, 0.0), F(N);
    const auto bc = st.flow_constraints(0.1);
    for (std::size_t k = 0; k < bc.dofs.size(); ++k) x[bc.dofs[k]] = bc.values[k];
    prob.residual(x, F);
    for (auto& f : F) f = -f;
    const SparseMatrix J = prob.jacobian(x);
    Vector dx(N, 0.0);
    LinearSolverConfig cfg{KrylovMethod::GMRES, 1e-8, 1e-14, 400, 30, kind};
    Preconditioner M;
    if (kind == PreconditionerKind::BlockPCD) M = make_block_pcd(st.pcd_operators(J, x, prev, h, 0.1));
    const SolveReport r = solve_gmres(J, F, dx, cfg, M);
    return std::pair<bool, int>{r.converged, r.iterations};
  };
  const auto none = iterations(4, PreconditionerKind::None);
  const auto p1 = iterations(2, PreconditionerKind::BlockPCD);
  const auto p2 = iterations(4, PreconditionerKind::BlockPCD);
  const auto p3 = iterations(8, PreconditionerKind::BlockPCD);
  MESSAGE("pcd iterations " << p1.second << " " << p2.second << " " << p3.second);
  CHECK_FALSE(none.first);
  CHECK(p1.first);
  CHECK(p2.first);
  CHECK(p3.first);
  CHECK(p3.second <= 2 * p1.second);
}

TEST_CASE("transport: zero data, closed-box mass, advection speed") {
  SUBCASE("zero stays zero") {
    auto mesh = channel(4.0, 1.0, 8, 2);
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, ProblemData{});
    const auto& D = st.disc();
    const DiscreteField v = interpolate_vector(D.Vvec, [](const Point& x) {
      return Point{4.0 * x[1] * (1 - x[1]), 0, 0};
    });
    const DiscreteField u = st.solve_transport(DiscreteField(D.W), v, DiscreteField(D.Wvec), 0.1, 0.1);
    for (double c : u.coeffs) CHECK(c == 0.0);
  }
  SUBCASE("closed box conserves mass") {
    auto mesh = channel(1.0, 1.0, 8, 8);
    ProblemData data;
    data.closed_transport = true;
    NondimParams P;
    P.Pe = 1e3;
    CoupledStepper st(mesh, P, ModelVariant{}, data);
    const auto& D = st.disc();
    const DiscreteField v = interpolate_vector(D.Vvec, [](const Point& x) {
      return Point{-(x[1] - 0.5), x[0] - 0.5, 0};
    });
    DiscreteField u = interpolate(D.W, [](const Point& x) {
      const double r2 = (x[0] - 0.3) * (x[0] - 0.3) + (x[1] - 0.5) * (x[1] - 0.5);
      return 0.8 * std::exp(-r2 / 0.02);
    });
    const double m0 = total(st, u);
    double worst_step = 0.0;
    for (int k = 0; k < 100; ++k) {
      const double before = total(st, u);
      u = st.solve_transport(u, v, DiscreteField(D.Wvec), 0.05, 0.05 * (k + 1));
      worst_step = std::max(worst_step, std::abs(total(st, u) - before) / m0);
    }
    CHECK(worst_step <= 1e-10);
    CHECK(std::abs(total(st, u) - m0) / m0 <= 1e-8);
  }
  SUBCASE("a bump moves with the flow") {
    auto mesh = channel(8.0, 1.0, 64, 4);
    NondimParams P;
    P.Pe = 1e4;
    CoupledStepper st(mesh, P, ModelVariant{}, ProblemData{});
    const auto& D = st.disc();
    const DiscreteField v =
        interpolate_vector(D.Vvec, [](const Point&) { return Point{1.0, 0, 0}; });
    DiscreteField u = interpolate(D.W, [](const Point& x) {
      return 0.5 * std::exp(-(x[0] - 2.0) * (x[0] - 2.0) / 0.25);
    });
    auto com = [&](const DiscreteField& f) {
      DiscreteField xf = interpolate(D.W, [](const Point& x) { return x[0]; });
      const auto& rule = quadrature_rule(2, 4);
      CellValues cw(*D.W, rule);
      double a = 0.0, b = 0.0;
      for (std::size_t c = 0; c < mesh->n_cells(); ++c) {
        cw.reinit(c);
        for (int q = 0; q < cw.n_q(); ++q) {
          const double uq = cw.value(f.coeffs, q);
          a += cw.point(q)[0] * uq * cw.JxW(q);
          b += uq * cw.JxW(q);
        }
      }
      return a / b;
    };
    const double tau = 0.05;
    const double c0 = com(u);
    for (int k = 0; k < 20; ++k)
      u = st.solve_transport(u, v, DiscreteField(D.Wvec), tau, tau * (k + 1));
    const double moved = com(u) - c0;
    CHECK(moved == doctest::Approx(20 * tau).epsilon(0.05));
  }
}

TEST_CASE("coupled stepping: call order, variants, initialization") {
  auto mesh = channel(8.0, 1.0, 16, 2);
  ProblemData data;
  data.velocity_bc = [](double, const Point& x) { return parabolic(x); };
  data.external_field = source_field(5.0, {4.0, 2.5, 0.0});
  data.inflow_u = [](double t, const Point& x) {
    return t < 1.0 ? 0.3 * std::exp(-(x[1] - 0.5) * (x[1] - 0.5) / 0.05) : 0.0;
  };

  SUBCASE("sub-steps run in order on the right inputs") {
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const State s0 = st.initialize();
    st.clear_trace();
    const State s1 = st.advance(s0, 0.1);
    const std::vector<std::string> expect{"magnetostatics[u:0]", "projection[phi:1]",
                                          "navier_stokes[u:0,h:1]", "transport[u:0,v:1,h:1]"};
    CHECK(st.call_trace() == expect);
    CHECK(s1.k == 1);
    CHECK(s1.t == doctest::Approx(0.1));
    CHECK(st.last_stats().transport.converged);
    double umax = 0.0;
    for (double c : s1.u.coeffs) umax = std::max(umax, c);
    CHECK(umax > 0.0);
  }
  SUBCASE("zero initial density gives the pure-fluid flow") {
    CoupledStepper full(mesh, NondimParams{}, ModelVariant{}, data);
    CoupledStepper reduced(mesh, NondimParams{}, ModelVariant{false, false}, data);
    const State a = full.initialize(), b = reduced.initialize();
    for (std::size_t i = 0; i < a.v.coeffs.size(); ++i)
      CHECK(a.v.coeffs[i] == doctest::Approx(b.v.coeffs[i]).epsilon(1e-9));
  }
  SUBCASE("fully reduced variant keeps flow and field fixed") {
    ProblemData d0 = data;
    d0.inflow_u = [](double, const Point&) { return 0.0; };
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{false, false}, d0);
    const State s0 = st.initialize();
    State s = s0;
    for (int k = 0; k < 3; ++k) s = st.advance(s, 0.1);
    CHECK(s.v.coeffs == s0.v.coeffs);
    CHECK(s.p.coeffs == s0.p.coeffs);
    CHECK(s.phi.coeffs == s0.phi.coeffs);
    CHECK(s.h.coeffs == s0.h.coeffs);
    for (double c : s.u.coeffs) CHECK(c == 0.0);
  }
  SUBCASE("zero external field and density") {
    ProblemData d0 = data;
    d0.external_field = [](const Point&) { return Vec3{0, 0, 0}; };
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, d0);
    const State s0 = st.initialize();
    for (double c : s0.phi.coeffs) CHECK(c == 0.0);
    for (double c : s0.h.coeffs) CHECK(c == 0.0);
  }
  SUBCASE("one double step differs from two single steps") {
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const State s0 = st.initialize();
    const State a = st.advance(st.advance(s0, 0.1), 0.1);
    const State b = st.advance(s0, 0.2);
    double diff = 0.0, amax = 0.0, bmax = 0.0;
    for (std::size_t i = 0; i < a.u.coeffs.size(); ++i) {
      diff = std::max(diff, std::abs(a.u.coeffs[i] - b.u.coeffs[i]));
      amax = std::max(amax, std::abs(a.u.coeffs[i]));
      bmax = std::max(bmax, std::abs(b.u.coeffs[i]));
    }
    CHECK(diff > 1e-6);
    CHECK(amax < 1.5);
    CHECK(bmax < 1.5);
    CHECK(a.t == doctest::Approx(b.t));
  }
  SUBCASE("bad time step") {
    CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, data);
    const State s0 = st.initialize();
    CHECK_THROWS_AS(st.advance(s0, 0.0), std::invalid_argument);
  }
}

TEST_CASE("energy diagnostics integrate the densities") {
  auto mesh = channel(1.0, 1.0, 2, 2);
  CoupledStepper st(mesh, NondimParams{}, ModelVariant{}, ProblemData{});
  const auto& D = st.disc();
  State s;
  s.u = interpolate(D.W, [](const Point&) { return 0.25; });
  s.v = interpolate_vector(D.Vvec, [](const Point&) { return Point{2.0, 0, 0}; });
  s.h = DiscreteField(D.Wvec);
  const EnergyTerms e = st.energy_diagnostics(s);
  const NondimParams P;
  CHECK(e.E_kin == doctest::Approx(0.5 * mixture_density(0.25, P) * 4.0));
  CHECK(e.D_kin == doctest::Approx(0.0));
  CHECK(e.E_mag == doctest::Approx(0.0));
}
