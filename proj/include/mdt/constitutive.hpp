#pragma once

#include "mdt/vec.hpp"

namespace mdt {

/// Characteristic numbers of the nondimensional model. Defaults are the
/// reference values of the pipe experiment; Pe uses the positive exponent.
struct NondimParams {
  double Pe = 1.1e7;
  double Re = 10.0;
  double Ke_star = 7.5e-3;
  double Ke = 7.2e-2;
  double rho_ratio = 3.82;  // particle density / fluid density
  double M_bar = 0.28;      // saturation magnetization * packing / field scale
  double xi_bar = 7.2e4;    // Langevin argument scale

  /// Throws std::invalid_argument unless every entry is positive and finite.
  void validate() const;
  bool operator==(const NondimParams&) const = default;
};

/// Which back-couplings of the particle phase are kept.
struct ModelVariant {
  bool fluid_response = true;   // particles act on density, viscosity and momentum
  bool magnet_response = true;  // particles enter the permeability

  bool operator==(const ModelVariant&) const = default;
};

/// SI inputs for derive_nondim.
struct DimensionalParams {
  double rho_f = 1050.0;       // carrier density [kg/m^3]
  double rho_p = 4011.0;       // particle density [kg/m^3]
  double eta_f = 3.5e-3;       // carrier viscosity [Pa s]
  double r_p = 5e-9;           // particle radius [m]
  double V_p = 5.236e-25;      // particle volume [m^3]
  double T_abs = 310.0;        // temperature [K]
  double k_B = 1.380649e-23;   // [J/K]
  double mu_0 = 1.25663706212e-6;  // [H/m]
  double M_s = 4.46e5;         // saturation magnetization [A/m]
  double P_pack = 0.7405;      // sphere packing density
  double p_moment = 2.3e-19;   // single particle moment [A m^2]
  double L_ref = 1e-3;         // [m]
  double V_ref = 3.33e-2;      // [m/s]
  double H_ref = 1e5;          // [A/m]

  void validate() const;
};

NondimParams derive_nondim(const DimensionalParams& d);

/// L(a) = coth(a) - 1/a for a >= 0.
double langevin(double alpha);
/// L(a)/a, equal to 1/3 at a = 0.
double langevin_hat(double alpha);
/// d/da (L(a)/a) divided by a; the a -> 0 limit is -2/45. Enters the
/// Jacobian of the magnetostatic coefficient.
double langevin_hat_slope(double alpha);
/// ln(sinh(a)/a), overflow-free for large a.
double log_sinhc(double alpha);

/// M_bar u L(xi_bar |h|) h/|h|; zero for h = 0.
Vec3 magnetization(double u, const Vec3& h, const NondimParams& p);
double mixture_density(double u, const NondimParams& p);
double mixture_viscosity(double u);

/// L_hat(xi_bar |h|) (h . grad) h, the magnetophoretic drift direction.
Vec3 magnetic_drift(const Vec3& h, const Tensor& grad_h, const NondimParams& p);
/// u(1-u) for u >= 0, continued below zero by u exp(u/0.05) so that it stays
/// C1 and bounded. With u(1-u) itself, undershoots are collected without bound
/// wherever the drift points into a wall.
double drift_mobility(double u);
double drift_mobility_slope(double u);
/// Relative particle flux u v_rel = -(1/Pe) grad u + u(1-u)/Ke*^2 drift.
Vec3 flux_vprel_hat(double u, const Vec3& grad_u, const Vec3& h, const Tensor& grad_h,
                    const NondimParams& p);
/// v + (1-u)/Ke*^2 drift.
Vec3 effective_velocity(const Vec3& v, double u, const Vec3& h, const Tensor& grad_h,
                        const NondimParams& p);
/// u/Ke^2 drift.
Vec3 body_force(double u, const Vec3& h, const Tensor& grad_h, const NondimParams& p);

/// Pointwise fields entering the energy and dissipation integrands.
struct PointFields {
  double u = 0.0;
  Vec3 grad_u{};
  Vec3 v{};
  Tensor grad_v{};
  Vec3 h{};
  Tensor grad_h{};
};

struct EnergyTerms {
  double E_kin = 0.0;
  double E_mix = 0.0;
  double E_mag = 0.0;
  double D_kin = 0.0;
  double D_drag = 0.0;

  EnergyTerms& add(const EnergyTerms& o, double weight);
};

/// Integrand densities of the kinetic, mixing and magnetic energies and of
/// the viscous and drag dissipations, scaled by the characteristic numbers.
/// u is clamped to [1e-12, 1 - 1e-12] inside logarithms and denominators.
EnergyTerms energy_density(const PointFields& f, const NondimParams& p, const ModelVariant& mv);

}  // namespace mdt
