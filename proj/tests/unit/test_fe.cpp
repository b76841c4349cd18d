#include <cmath>
#include <random>

#include "../support/poisson.hpp"
#include "doctest.h"
#include "mdt/assembly.hpp"
#include "mdt/fe.hpp"

using namespace mdt;

namespace {

std::shared_ptr<const SimplicialMesh> square(int n) {
  return std::make_shared<const SimplicialMesh>(build_channel_2d(1, 1, n, n));
}

std::shared_ptr<const SimplicialMesh> pipe() {
  return std::make_shared<const SimplicialMesh>(build_pipe_3d(0.5, 1.0, 0.5));
}

const std::set<BoundaryTag> kAll{BoundaryTag::Inflow, BoundaryTag::Outflow, BoundaryTag::Wall};

Bary random_bary(std::mt19937& rng, int dim) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Bary b{};
  double s = 0.0;
  for (int k = 0; k <= dim; ++k) s += (b[k] = -std::log(U(rng) + 1e-300));
  for (int k = 0; k <= dim; ++k) b[k] /= s;
  return b;
}

}  // namespace

TEST_CASE("dof counts") {
  auto m = square(3);
  FESpace p1(m, 1), p2(m, 2), v2(m, 2, 2);
  CHECK(p1.n_dofs() == m->n_vertices());
  CHECK(p2.n_dofs() == m->n_vertices() + m->n_edges());
  CHECK(v2.n_dofs() == 2 * p2.n_scalar_dofs());
  CHECK(p2.n_local() == 6);
  auto t = pipe();
  CHECK(FESpace(t, 2).n_local() == 10);
  CHECK_THROWS_AS(FESpace(m, 3), std::invalid_argument);
  CHECK_THROWS_AS(FESpace(m, 1, 0), std::invalid_argument);
}

TEST_CASE("local dofs are injective and continuous across facets") {
  for (auto m : {square(2), pipe()}) {
    auto V = std::make_shared<const FESpace>(m, 2);
    for (std::size_t c = 0; c < m->n_cells(); ++c) {
      auto d = V->cell_dofs(c);
      std::set<int> s(d.begin(), d.end());
      CHECK(s.size() == d.size());
    }
    // a random P2 field evaluated from either side of a shared vertex agrees
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    DiscreteField f(V);
    for (auto& c : f.coeffs) c = U(rng);
    for (std::size_t c = 0; c < m->n_cells(); ++c)
      for (int k = 0; k <= m->dim(); ++k) {
        Bary b{};
        b[k] = 1.0;
        CHECK(f.value(c, b) == doctest::Approx(f.at(m->cell(c)[k])).epsilon(1e-14));
      }
    // and at edge midpoints
    for (std::size_t c = 0; c < m->n_cells(); ++c)
      for (int e = 0; e < SimplicialMesh::edges_per_cell(m->dim()); ++e) {
        const auto le = SimplicialMesh::local_edge(m->dim(), e);
        Bary b{};
        b[le[0]] = b[le[1]] = 0.5;
        CHECK(f.value(c, b) ==
              doctest::Approx(f.at(m->n_vertices() + m->cell_edges(c)[e])).epsilon(1e-14));
      }
  }
}

TEST_CASE("partition of unity and the stiffness null space") {
  for (auto m : {square(3), pipe()})
    for (int deg = 1; deg <= 2; ++deg) {
      auto V = std::make_shared<const FESpace>(m, deg);
      const auto one = interpolate(V, [](const Point&) { return 1.0; });
      for (double c : one.coeffs) CHECK(c == 1.0);
      const auto K = assemble_bilinear(V, V, stiffness_kernel(V));
      for (double r : K * one.coeffs) CHECK(std::abs(r) < 1e-11);
      CHECK(K.is_symmetric(1e-13));
      const auto M = assemble_bilinear(V, V, mass_kernel(V));
      double total = 0.0;
      for (double r : M * one.coeffs) total += r;
      CHECK(std::abs(total - m->total_volume()) < 1e-12);
    }
}

TEST_CASE("stiffness applied to a linear function vanishes in interior rows") {
  auto m = square(4);
  for (int deg = 1; deg <= 2; ++deg) {
    auto V = std::make_shared<const FESpace>(m, deg);
    const auto K = assemble_bilinear(V, V, stiffness_kernel(V));
    const auto lin = interpolate(V, [](const Point& x) { return 2.0 * x[0] - 3.0 * x[1] + 0.5; });
    const auto r = K * lin.coeffs;
    const auto bd = V->boundary_dofs(kAll);
    std::set<int> bset(bd.begin(), bd.end());
    for (std::size_t i = 0; i < r.size(); ++i)
      if (!bset.count(int(i))) CHECK(std::abs(r[i]) < 1e-12);
  }
}

TEST_CASE("P2 reproduces quadratics and their gradients") {
  auto q = [](const Point& x) {
    return 1 + x[0] - 2 * x[1] + 0.5 * x[2] + x[0] * x[0] - 3 * x[0] * x[1] + 2 * x[1] * x[2] +
           x[2] * x[2];
  };
  auto gq = [](const Point& x) {
    return Grad{1 + 2 * x[0] - 3 * x[1], -2 - 3 * x[0] + 2 * x[2], 0.5 + 2 * x[1] + 2 * x[2]};
  };
  std::mt19937 rng(11);
  for (auto m : {square(3), pipe()}) {
    auto V = std::make_shared<const FESpace>(m, 2);
    const auto f = interpolate(V, q);
    for (int t = 0; t < 200; ++t) {
      const std::size_t c = rng() % m->n_cells();
      const Bary b = random_bary(rng, m->dim());
      const Point x = bary_to_point(*m, c, b);
      CHECK(std::abs(f.value(c, b) - q(x)) < 1e-13);
      const Grad g = f.gradient(c, b);
      const Grad ge = gq(x);
      for (int d = 0; d < m->dim(); ++d) CHECK(std::abs(g[d] - ge[d]) < 1e-12);
    }
  }
}

TEST_CASE("zero interpolation and vector interpolation layout") {
  auto m = square(2);
  auto V = std::make_shared<const FESpace>(m, 2, 2);
  const auto z = interpolate_vector(V, [](const Point&) { return Point{0, 0, 0}; });
  for (double c : z.coeffs) CHECK(c == 0.0);
  const auto v = interpolate_vector(V, [](const Point& x) { return Point{x[0], 7.0, 0}; });
  CHECK(v.at(3, 0) == V->dof_point(3)[0]);
  CHECK(v.at(3, 1) == 7.0);
}

TEST_CASE("facet integration: perimeter and divergence theorem") {
  for (auto m : {square(3), pipe()}) {
    auto V = std::make_shared<const FESpace>(m, 1);
    FacetValues fv(*V, 2);
    double area = 0.0, flux = 0.0;
    for (std::size_t f = 0; f < m->n_boundary_facets(); ++f) {
      fv.reinit(f);
      for (int q = 0; q < fv.n_q(); ++q) {
        area += fv.JxW(q);
        const Point& x = fv.point(q);
        flux += (x[0] * fv.normal()[0] + x[1] * fv.normal()[1] + x[2] * fv.normal()[2]) * fv.JxW(q);
      }
    }
    double bm = 0.0;
    for (std::size_t f = 0; f < m->n_boundary_facets(); ++f) bm += m->facet_measure(f);
    CHECK(area == doctest::Approx(bm).epsilon(1e-13));
    CHECK(flux == doctest::Approx(m->dim() * m->total_volume()).epsilon(1e-12));
  }
}

TEST_CASE("assembly is bitwise independent of the worker count") {
  auto m = std::make_shared<const SimplicialMesh>(refine_uniform(build_channel_2d(8, 1, 16, 2)));
  auto V = std::make_shared<const FESpace>(m, 2);
  const auto A1 = assemble_bilinear(V, V, stiffness_kernel(V), 1);
  const auto A3 = assemble_bilinear(V, V, stiffness_kernel(V), 3);
  REQUIRE(A1.nnz() == A3.nnz());
  CHECK(A1.values() == A3.values());
  CHECK(A1.col_idx() == A3.col_idx());
}

TEST_CASE("mixed layouts and mesh mismatches") {
  auto m = square(2);
  auto P2 = std::make_shared<const FESpace>(m, 2, 2);
  auto P1 = std::make_shared<const FESpace>(m, 1);
  DofLayout layout({P2, P1});
  CHECK(layout.n_dofs() == P2->n_dofs() + P1->n_dofs());
  CHECK(layout.n_local() == 15);
  CHECK(layout.local_offset(1, 0) == 12);
  std::vector<int> d(15);
  layout.cell_dofs(0, d);
  CHECK(d[6] == int(P2->n_scalar_dofs()) + P2->cell_dofs(0)[0]);
  CHECK(d[12] == int(P2->n_dofs()) + P1->cell_dofs(0)[0]);
  auto other = std::make_shared<const FESpace>(square(2), 1);
  CHECK_THROWS_AS(assemble_bilinear(P1, other, mass_kernel(P1)), std::invalid_argument);
}

TEST_CASE("Dirichlet constraints") {
  auto m = square(2);
  auto V = std::make_shared<const FESpace>(m, 1);
  const auto K0 = assemble_bilinear(V, V, stiffness_kernel(V));
  const auto M = assemble_bilinear(V, V, mass_kernel(V));
  SparseMatrix A = K0;
  for (std::size_t k = 0; k < A.nnz(); ++k) A.values()[k] += M.values()[k];
  const SparseMatrix A0 = A;
  Vector b(V->n_dofs(), 1.0);

  SUBCASE("empty set leaves the system unchanged") {
    Vector bb = b;
    apply_dirichlet(A, bb, {});
    CHECK(A.values() == A0.values());
    CHECK(bb == b);
  }
  SUBCASE("row replacement pins the value") {
    apply_dirichlet(A, b, {{0}, {5.0}});
    Vector x(V->n_dofs(), 0.0);
    LinearSolverConfig cfg;
    cfg.rel_tol = 1e-14;
    solve_linear(A, b, x, cfg);
    CHECK(x[0] == doctest::Approx(5.0).epsilon(1e-13));
  }
  SUBCASE("symmetric elimination keeps symmetry and the solution") {
    DirichletConstraint dc{{0, 3}, {5.0, -1.0}};
    SparseMatrix As = A;
    Vector bs = b;
    apply_dirichlet(As, bs, dc, DirichletMode::SymmetricElimination);
    CHECK(As.is_symmetric(1e-13));
    SparseMatrix Ar = A;
    Vector br = b;
    apply_dirichlet(Ar, br, dc, DirichletMode::RowReplacement);
    LinearSolverConfig cfg;
    cfg.rel_tol = 1e-14;
    Vector xs(V->n_dofs(), 0.0), xr(V->n_dofs(), 0.0);
    cfg.method = KrylovMethod::CG;
    solve_linear(As, bs, xs, cfg);
    cfg.method = KrylovMethod::GMRES;
    solve_linear(Ar, br, xr, cfg);
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(xs[i] - xr[i]) < 1e-11);
    CHECK(xs[3] == doctest::Approx(-1.0));
  }
  SUBCASE("invalid constraints") {
    CHECK_THROWS_AS(apply_dirichlet(A, b, {{0, 0}, {1.0, 2.0}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_dirichlet(A, b, {{1000}, {1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(apply_dirichlet(A, b, {{1}, {NAN}}), std::invalid_argument);
  }
}

TEST_CASE("L2 projection") {
  auto m = square(3);
  LinearSolverConfig cfg;
  cfg.method = KrylovMethod::CG;
  cfg.preconditioner = PreconditionerKind::Jacobi;
  cfg.rel_tol = 1e-13;
  SUBCASE("identity on the space") {
    auto V = std::make_shared<const FESpace>(m, 2);
    const auto f = interpolate(V, [](const Point& x) { return x[0] * x[1] - x[1] * x[1]; });
    const auto p = l2_project(
        [&](std::size_t c, const Bary& b, const Point&, std::span<double> out) {
          out[0] = f.value(c, b);
        },
        V, cfg);
    for (std::size_t i = 0; i < f.coeffs.size(); ++i)
      CHECK(std::abs(p.coeffs[i] - f.coeffs[i]) < 1e-10);
  }
  SUBCASE("constant one") {
    auto V = std::make_shared<const FESpace>(m, 1);
    const auto p = l2_project(
        [](std::size_t, const Bary&, const Point&, std::span<double> out) { out[0] = 1.0; }, V,
        cfg);
    for (double c : p.coeffs) CHECK(std::abs(c - 1.0) < 1e-10);
  }
  SUBCASE("minus the gradient of a linear potential") {
    auto P2 = std::make_shared<const FESpace>(m, 2);
    auto H = std::make_shared<const FESpace>(m, 1, 2);
    const auto phi = interpolate(P2, [](const Point& x) { return x[0]; });
    const auto h = l2_project(
        [&](std::size_t c, const Bary& b, const Point&, std::span<double> out) {
          const Grad g = phi.gradient(c, b);
          out[0] = -g[0];
          out[1] = -g[1];
        },
        H, cfg);
    for (std::size_t i = 0; i < H->n_scalar_dofs(); ++i) {
      CHECK(std::abs(h.at(i, 0) + 1.0) < 1e-10);
      CHECK(std::abs(h.at(i, 1)) < 1e-10);
    }
  }
}

TEST_CASE("Poisson convergence rates") {
  using namespace mdt::testing;
  for (int deg = 1; deg <= 2; ++deg) {
    std::vector<double> err;
    for (int n : {2, 4, 8, 16}) err.push_back(poisson_l2_error(deg, n, sine_forcing, sine_solution));
    for (std::size_t k = 1; k < err.size(); ++k) {
      const double rate = std::log2(err[k - 1] / err[k]);
      INFO("degree " << deg << " level " << k << " rate " << rate);
      if (k >= 2) CHECK(rate >= (deg == 1 ? 1.9 : 2.9));
    }
  }
}
