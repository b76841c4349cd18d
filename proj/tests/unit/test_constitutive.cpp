#include <boost/multiprecision/cpp_bin_float.hpp>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "doctest.h"
#include "mdt/constitutive.hpp"

using namespace mdt;
using mp = boost::multiprecision::cpp_bin_float_50;

namespace {

mp mp_langevin(double a) {
  const mp x(a);
  return cosh(x) / sinh(x) - 1 / x;
}

mp mp_log_sinhc(double a) {
  const mp x(a);
  return log(sinh(x) / x);
}

// d/da (L(a)/a) / a = (1/a^2 - 1/sinh^2 a)/a^2 - L(a)/a^3
mp mp_hat_slope(double a) {
  const mp x(a);
  const mp s = sinh(x);
  return (1 / (x * x) - 1 / (s * s)) / (x * x) - mp_langevin(a) / (x * x * x);
}

double rel(double got, const mp& want) {
  return static_cast<double>(abs((mp(got) - want) / want));
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i)
    g.push_back(std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (n - 1)));
  return g;
}

}  // namespace

TEST_CASE("langevin reference values") {
  CHECK(langevin(0.0) == 0.0);
  CHECK(std::abs(langevin(1.0) - 0.3130352855) < 1e-10);
  CHECK(rel(langevin(1.0), mp_langevin(1.0)) < 1e-14);
  CHECK(langevin(50.0) > 0.97);
  CHECK(langevin(50.0) < 1.0);
  CHECK(std::abs(langevin(50.0) - 0.98) < 1e-15);
  CHECK_THROWS_AS(langevin(-1e-3), std::invalid_argument);
  CHECK_THROWS_AS(langevin(NAN), std::invalid_argument);
}

TEST_CASE("langevin_hat reference values") {
  CHECK(langevin_hat(0.0) == doctest::Approx(1.0 / 3).epsilon(1e-16));
  CHECK(std::abs(langevin_hat(1.0) - 0.3130352855) < 1e-10);
  CHECK(langevin_hat(2.0) < langevin_hat(1.0));
}

TEST_CASE("langevin and langevin_hat match the extended-precision oracle") {
  for (double a : log_grid(1e-8, 1e2, 200)) {
    INFO("alpha = " << a);
    const mp L = mp_langevin(a);
    CHECK(rel(langevin(a), L) < 1e-12);
    CHECK(rel(langevin_hat(a), L / a) < 1e-12);
  }
}

TEST_CASE("branches join continuously") {
  for (double s : {1e-4, 1.0}) {
    const double below = std::nextafter(s, 0.0);
    CHECK(std::abs(langevin(below) - langevin(s)) <= 1e-10 * langevin(s));
    CHECK(std::abs(langevin_hat(below) - langevin_hat(s)) <= 1e-10);
    CHECK(std::abs(langevin_hat_slope(below) - langevin_hat_slope(s)) <= 1e-10);
  }
}

TEST_CASE("shape: increasing, concave, bounded; hat decreasing") {
  const auto g = log_grid(1e-6, 1e3, 400);
  for (std::size_t i = 1; i < g.size(); ++i) {
    CHECK(langevin(g[i]) > langevin(g[i - 1]));
    CHECK(langevin_hat(g[i]) < langevin_hat(g[i - 1]));
  }
  for (double a : g) CHECK(langevin(a) <= std::min(a / 3.0, 1.0));
  for (double a = 0.05; a < 30; a += 0.05) {
    const double h = 0.01;
    CHECK(langevin(a + h) - 2 * langevin(a) + langevin(a - h) < 0.0);
  }
}

TEST_CASE("slope of langevin_hat") {
  CHECK(langevin_hat_slope(0.0) == doctest::Approx(-2.0 / 45).epsilon(1e-15));
  for (double a : {1e-6, 1e-4, 1e-3}) {
    const double series = -2.0 / 45 + 8.0 / 945 * a * a;
    CHECK(std::abs(langevin_hat_slope(a) - series) < 1e-14);
  }
  for (double a : log_grid(1e-2, 1e3, 60)) {
    INFO("alpha = " << a);
    CHECK(rel(langevin_hat_slope(a), mp_hat_slope(a)) < 1e-10);
  }
  for (double a : {0.3, 2.0, 17.0}) {
    const double h = 1e-6 * a;
    const double fd = (langevin_hat(a + h) - langevin_hat(a - h)) / (2 * h);
    CHECK(std::abs(fd / a - langevin_hat_slope(a)) < 1e-7 * std::abs(langevin_hat_slope(a)));
  }
}

TEST_CASE("log_sinhc is accurate and overflow free") {
  for (double a : log_grid(1e-4, 5e2, 80)) {
    INFO("alpha = " << a);
    CHECK(rel(log_sinhc(a), mp_log_sinhc(a)) < 1e-12);
  }
  const double big = log_sinhc(7.2e4);
  CHECK(std::isfinite(big));
  CHECK(big == doctest::Approx(7.2e4 - std::log(2.0) - std::log(7.2e4)).epsilon(1e-15));
}

TEST_CASE("magnetization") {
  NondimParams p;
  const Vec3 h{0.3, -0.4, 0.0};
  const Vec3 m0 = magnetization(0.0, h, p);
  CHECK(norm3(m0) == 0.0);
  const Vec3 mz = magnetization(0.7, {0, 0, 0}, p);
  CHECK(norm3(mz) == 0.0);
  // saturation: |h| = 0.5, xi_bar |h| = 3.6e4
  const Vec3 ms = magnetization(1.0, h, p);
  CHECK(norm3(ms) == doctest::Approx(p.M_bar * (1 - 1.0 / 3.6e4)).epsilon(1e-12));
  CHECK(ms[0] / ms[1] == doctest::Approx(h[0] / h[1]));
  for (double u : {0.1, 0.5, 1.0})
    for (double s : {1e-9, 1e-6, 1e-3, 1.0}) {
      const Vec3 m = magnetization(u, {s, 0, 0}, p);
      CHECK(norm3(m) <= p.M_bar * u * (1 + 1e-15));
    }
}

TEST_CASE("mixture laws") {
  NondimParams p;
  CHECK(mixture_density(0.0, p) == 1.0);
  CHECK(mixture_density(1.0, p) == doctest::Approx(3.82).epsilon(1e-15));
  CHECK(mixture_density(0.5, p) == doctest::Approx(2.41).epsilon(1e-15));
  CHECK(mixture_viscosity(0.0) == 1.0);
  CHECK(mixture_viscosity(1.0) == 3.5);
  CHECK(mixture_viscosity(0.2) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("relative flux, effective velocity, body force") {
  NondimParams p;
  const Tensor zero{};
  Tensor G{};
  G[0] = 1.0;  // d h1 / d x1
  const Vec3 e1{1, 0, 0};
  const Vec3 gu{0.2, -0.1, 0};

  CHECK(norm3(flux_vprel_hat(0.0, {0, 0, 0}, e1, G, p)) == 0.0);
  const Vec3 f1 = flux_vprel_hat(1.0, gu, e1, G, p);
  CHECK(f1[0] == doctest::Approx(-0.2 / p.Pe));
  CHECK(f1[1] == doctest::Approx(0.1 / p.Pe));
  CHECK(norm3(flux_vprel_hat(0.4, {0, 0, 0}, e1, zero, p)) == 0.0);

  const Vec3 v{0.3, 0.1, 0};
  CHECK(effective_velocity(v, 0.4, e1, zero, p) == v);
  CHECK(effective_velocity(v, 1.0, e1, G, p) == v);
  const Vec3 ve = effective_velocity({0, 0, 0}, 0.0, e1, G, p);
  const double expected = static_cast<double>(mp_langevin(p.xi_bar) / p.xi_bar) /
                          (p.Ke_star * p.Ke_star);
  CHECK(ve[0] == doctest::Approx(expected).epsilon(1e-13));
  CHECK(ve[1] == 0.0);

  CHECK(norm3(body_force(0.0, e1, G, p)) == 0.0);
  CHECK(norm3(body_force(0.5, e1, zero, p)) == 0.0);
  const Vec3 bf = body_force(0.5, {2.0, 0, 0}, G, p);
  CHECK(bf[0] > 0.0);
  CHECK(bf[1] == 0.0);
  CHECK(bf[2] == 0.0);
}

TEST_CASE("drift mobility") {
  for (double u : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    CHECK(drift_mobility(u) == u * (1.0 - u));
    CHECK(drift_mobility_slope(u) == 1.0 - 2.0 * u);
  }
  // value and slope continuous at zero
  const double e = 1e-9;
  CHECK(std::abs(drift_mobility(-e)) < 2e-9);
  CHECK(drift_mobility_slope(-e) == doctest::Approx(1.0).epsilon(1e-6));
  // slope matches central differences on both branches
  for (double u : {-0.3, -0.05, -0.01, 0.2, 0.7}) {
    const double d = 1e-6;
    const double fd = (drift_mobility(u + d) - drift_mobility(u - d)) / (2 * d);
    CHECK(drift_mobility_slope(u) == doctest::Approx(fd).epsilon(1e-6));
  }
  // below zero: negative, bounded by its minimum -0.05/e, decaying to zero
  double lo = 0.0;
  for (double u = -5.0; u < 0.0; u += 1e-3) {
    CHECK(drift_mobility(u) <= 0.0);
    lo = std::min(lo, drift_mobility(u));
  }
  CHECK(lo == doctest::Approx(-0.05 / std::numbers::e).epsilon(1e-5));
  CHECK(std::abs(drift_mobility(-5.0)) < 1e-40);
}

TEST_CASE("derive_nondim") {
  DimensionalParams d;
  const auto p = derive_nondim(d);
  CHECK_NOTHROW(p.validate());
  // scaling V by 2
  DimensionalParams d2 = d;
  d2.V_ref *= 2;
  const auto q = derive_nondim(d2);
  CHECK(q.Re == doctest::Approx(2 * p.Re).epsilon(1e-14));
  CHECK(q.Pe == doctest::Approx(2 * p.Pe).epsilon(1e-14));
  CHECK(q.Ke * q.Ke == doctest::Approx(4 * p.Ke * p.Ke).epsilon(1e-14));
  // M_bar = 1 when M_s = H / P
  DimensionalParams d3 = d;
  d3.M_s = d3.H_ref / d3.P_pack;
  CHECK(derive_nondim(d3).M_bar == doctest::Approx(1.0).epsilon(1e-15));
  // Re = 10 by inverting rho L V / eta for V
  DimensionalParams d4 = d;
  d4.V_ref = 10.0 * d4.eta_f / (d4.rho_f * d4.L_ref);
  CHECK(derive_nondim(d4).Re == doctest::Approx(10.0).epsilon(1e-14));
  // Ke*^2 / Ke^2 = 6 pi eta r L / (rho V_p V)
  const double ratio = p.Ke_star * p.Ke_star / (p.Ke * p.Ke);
  const double identity =
      6 * std::numbers::pi * d.eta_f * d.r_p * d.L_ref / (d.rho_f * d.V_p * d.V_ref);
  CHECK(ratio == doctest::Approx(identity).epsilon(1e-13));
  CHECK(p.rho_ratio == doctest::Approx(d.rho_p / d.rho_f));
  CHECK(p.xi_bar == doctest::Approx(d.mu_0 * d.p_moment / (d.k_B * d.T_abs) * d.H_ref));
  DimensionalParams bad = d;
  bad.eta_f = 0.0;
  CHECK_THROWS_AS(derive_nondim(bad), std::invalid_argument);
  bad = d;
  bad.T_abs = -1;
  CHECK_THROWS_AS(derive_nondim(bad), std::invalid_argument);
}

TEST_CASE("energy densities") {
  NondimParams p;
  ModelVariant full;
  PointFields f;
  f.u = 0.5;
  const auto e = energy_density(f, p, full);
  CHECK(e.E_kin == 0.0);
  CHECK(e.D_kin == 0.0);
  CHECK(e.D_drag == 0.0);
  CHECK(e.E_mag == 0.0);
  const double pref = p.Ke_star * p.Ke_star / (p.Pe * p.Ke * p.Ke);
  CHECK(e.E_mix == doctest::Approx(pref * (std::log(0.5) - 1.0)).epsilon(1e-14));
  for (double u : {0.0, 1.0}) {
    f.u = u;
    const auto c = energy_density(f, p, full);
    CHECK(std::isfinite(c.E_mix));
    CHECK(std::isfinite(c.D_drag));
  }
  f.u = 0.2;
  f.v = {1.0, 0.0, 0.0};
  f.grad_v = {0, 1, 0, 0, 0, 0, 0, 0, 0};
  const auto k = energy_density(f, p, full);
  CHECK(k.E_kin == doctest::Approx(0.5 * mixture_density(0.2, p)));
  // |D|^2 = 2 * (1/2)^2
  CHECK(k.D_kin == doctest::Approx(mixture_viscosity(0.2) * 0.5 / p.Re));
  const auto r = energy_density(f, p, ModelVariant{false, true});
  CHECK(r.E_kin == doctest::Approx(0.5));
  f.h = {1e-3, 0, 0};
  CHECK(energy_density(f, p, full).E_mag < 0.0);
}

TEST_CASE("parameter validation") {
  NondimParams p;
  CHECK_NOTHROW(p.validate());
  p.Pe = 0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = {};
  p.xi_bar = INFINITY;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
