#include "mdt/constitutive.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mdt {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
}

constexpr double kSeriesSwitch = 1e-4;
constexpr double kDirectSwitch = 1.0;
constexpr int kTerms = 22;

// Taylor coefficients of L(a)/a = sum_n c_n a^(2n-2), c_n = 2^(2n) B_2n / (2n)!,
// written through zeta(2n) to avoid tabulating Bernoulli numbers.
const std::array<double, kTerms + 1>& series_coefficients() {
  static const std::array<double, kTerms + 1> c = [] {
    std::array<double, kTerms + 1> out{};
    for (int n = 1; n <= kTerms; ++n) {
      const double sign = n % 2 == 1 ? 1.0 : -1.0;
      out[n] = sign * 2.0 * std::riemann_zeta(2.0 * n) / std::pow(std::numbers::pi, 2.0 * n);
    }
    out[1] = 1.0 / 3.0;
    out[2] = -1.0 / 45.0;
    return out;
  }();
  return c;
}

double hat_series(double a) {
  const auto& c = series_coefficients();
  const double a2 = a * a;
  double s = 0.0;
  for (int n = kTerms; n >= 1; --n) s = s * a2 + c[n];
  return s;
}

double slope_series(double a) {
  const auto& c = series_coefficients();
  const double a2 = a * a;
  double s = 0.0;
  for (int n = kTerms; n >= 2; --n) s = s * a2 + c[n] * (2.0 * n - 2.0);
  return s;
}

double coth(double a) { return 1.0 + 2.0 / std::expm1(2.0 * a); }

}  // namespace

void NondimParams::validate() const {
  require_positive(Pe, "Pe");
  require_positive(Re, "Re");
  require_positive(Ke_star, "Ke_star");
  require_positive(Ke, "Ke");
  require_positive(rho_ratio, "rho_ratio");
  require_positive(M_bar, "M_bar");
  require_positive(xi_bar, "xi_bar");
}

void DimensionalParams::validate() const {
  require_positive(rho_f, "rho_f");
  require_positive(rho_p, "rho_p");
  require_positive(eta_f, "eta_f");
  require_positive(r_p, "r_p");
  require_positive(V_p, "V_p");
  require_positive(T_abs, "T_abs");
  require_positive(k_B, "k_B");
  require_positive(mu_0, "mu_0");
  require_positive(M_s, "M_s");
  require_positive(P_pack, "P_pack");
  require_positive(p_moment, "p_moment");
  require_positive(L_ref, "L_ref");
  require_positive(V_ref, "V_ref");
  require_positive(H_ref, "H_ref");
}

NondimParams derive_nondim(const DimensionalParams& d) {
  d.validate();
  const double gamma = 6.0 * std::numbers::pi * d.eta_f * d.r_p;
  const double diffusivity = d.k_B * d.T_abs / gamma;
  const double xi = d.mu_0 * d.p_moment / (d.k_B * d.T_abs);
  const double magnetic = d.mu_0 * d.M_s * d.P_pack * xi * d.H_ref * d.H_ref;
  NondimParams p;
  p.Pe = d.V_ref * d.L_ref / diffusivity;
  p.Re = d.rho_f * d.L_ref * d.V_ref / d.eta_f;
  p.Ke_star = std::sqrt(gamma * d.V_ref * d.L_ref / (d.V_p * magnetic));
  p.Ke = std::sqrt(d.rho_f * d.V_ref * d.V_ref / magnetic);
  p.rho_ratio = d.rho_p / d.rho_f;
  p.M_bar = d.M_s * d.P_pack / d.H_ref;
  p.xi_bar = xi * d.H_ref;
  return p;
}

double langevin(double a) {
  if (!(a >= 0.0)) throw std::invalid_argument("langevin argument must be non-negative");
  if (a < kSeriesSwitch) return a / 3.0 - a * a * a / 45.0;
  if (a < kDirectSwitch) return a * hat_series(a);
  return coth(a) - 1.0 / a;
}

double langevin_hat(double a) {
  if (!(a >= 0.0)) throw std::invalid_argument("langevin argument must be non-negative");
  if (a < kSeriesSwitch) return 1.0 / 3.0 - a * a / 45.0;
  if (a < kDirectSwitch) return hat_series(a);
  return (coth(a) - 1.0 / a) / a;
}

double langevin_hat_slope(double a) {
  if (!(a >= 0.0)) throw std::invalid_argument("langevin argument must be non-negative");
  if (a < kDirectSwitch) return slope_series(a);
  // L'(a)/a^2 - L(a)/a^3 with L'(a) = 1/a^2 - 1/sinh^2(a)
  const double s = a > 350.0 ? 0.0 : 1.0 / std::sinh(a);
  const double dL = 1.0 / (a * a) - s * s;
  return dL / (a * a) - (coth(a) - 1.0 / a) / (a * a * a);
}

double log_sinhc(double a) {
  if (!(a >= 0.0)) throw std::invalid_argument("log_sinhc argument must be non-negative");
  if (a < 0.1) {
    const double a2 = a * a;
    return a2 * (1.0 / 6.0 +
                 a2 * (-1.0 / 180.0 + a2 * (1.0 / 2835.0 + a2 * (-1.0 / 37800.0 + a2 / 467775.0))));
  }
  if (a < 20.0) return std::log(std::sinh(a) / a);
  return a + std::log1p(-std::exp(-2.0 * a)) - std::numbers::ln2 - std::log(a);
}

Vec3 magnetization(double u, const Vec3& h, const NondimParams& p) {
  const double s = p.M_bar * u * p.xi_bar * langevin_hat(p.xi_bar * norm3(h));
  return {s * h[0], s * h[1], s * h[2]};
}

double mixture_density(double u, const NondimParams& p) { return (p.rho_ratio - 1.0) * u + 1.0; }

double mixture_viscosity(double u) { return 1.0 + 2.5 * u; }

Vec3 magnetic_drift(const Vec3& h, const Tensor& grad_h, const NondimParams& p) {
  const double l = langevin_hat(p.xi_bar * norm3(h));
  const Vec3 g = directional(grad_h, h);
  return {l * g[0], l * g[1], l * g[2]};
}

namespace {
// Decay length of the mobility below zero.
constexpr double kMobilityTail = 0.05;
}  // namespace

double drift_mobility(double u) {
  return u >= 0.0 ? u * (1.0 - u) : u * std::exp(u / kMobilityTail);
}

double drift_mobility_slope(double u) {
  return u >= 0.0 ? 1.0 - 2.0 * u : std::exp(u / kMobilityTail) * (1.0 + u / kMobilityTail);
}

Vec3 flux_vprel_hat(double u, const Vec3& grad_u, const Vec3& h, const Tensor& grad_h,
                    const NondimParams& p) {
  const Vec3 g = magnetic_drift(h, grad_h, p);
  const double m = u * (1.0 - u) / (p.Ke_star * p.Ke_star);
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = -grad_u[i] / p.Pe + m * g[i];
  return out;
}

Vec3 effective_velocity(const Vec3& v, double u, const Vec3& h, const Tensor& grad_h,
                        const NondimParams& p) {
  const Vec3 g = magnetic_drift(h, grad_h, p);
  const double m = (1.0 - u) / (p.Ke_star * p.Ke_star);
  return {v[0] + m * g[0], v[1] + m * g[1], v[2] + m * g[2]};
}

Vec3 body_force(double u, const Vec3& h, const Tensor& grad_h, const NondimParams& p) {
  const Vec3 g = magnetic_drift(h, grad_h, p);
  const double m = u / (p.Ke * p.Ke);
  return {m * g[0], m * g[1], m * g[2]};
}

EnergyTerms& EnergyTerms::add(const EnergyTerms& o, double w) {
  E_kin += w * o.E_kin;
  E_mix += w * o.E_mix;
  E_mag += w * o.E_mag;
  D_kin += w * o.D_kin;
  D_drag += w * o.D_drag;
  return *this;
}

EnergyTerms energy_density(const PointFields& f, const NondimParams& p, const ModelVariant& mv) {
  constexpr double eps = 1e-12;
  const double uc = std::clamp(f.u, eps, 1.0 - eps);
  const double rho = mv.fluid_response ? mixture_density(f.u, p) : 1.0;
  const double eta = mv.fluid_response ? mixture_viscosity(f.u) : 1.0;
  const double ke2 = p.Ke * p.Ke;
  const double ks2 = p.Ke_star * p.Ke_star;
  EnergyTerms e;
  e.E_kin = 0.5 * rho * dot3(f.v, f.v);
  e.E_mix = ks2 / (p.Pe * ke2) *
            (uc * (std::log(uc) - 1.0) + (1.0 - uc) * (std::log(1.0 - uc) - 1.0));
  e.E_mag = -f.u * log_sinhc(p.xi_bar * norm3(f.h)) / (ke2 * p.xi_bar * p.xi_bar);
  double dd = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double d = 0.5 * (f.grad_v[3 * i + j] + f.grad_v[3 * j + i]);
      dd += d * d;
    }
  e.D_kin = eta * dd / p.Re;
  const Vec3 w = flux_vprel_hat(f.u, f.grad_u, f.h, f.grad_h, p);
  e.D_drag = 0.5 * ks2 / ke2 * dot3(w, w) / (uc * (1.0 - uc));
  return e;
}

}  // namespace mdt
