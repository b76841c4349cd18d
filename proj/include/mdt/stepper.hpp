#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mdt/assembly.hpp"
#include "mdt/constitutive.hpp"
#include "mdt/fe.hpp"
#include "mdt/linalg.hpp"

namespace mdt {

/// The four spaces of the scheme on one mesh: P1 scalar (u, p), P2 scalar
/// (phi), P2 vector (v), P1 vector (h).
struct Discretization {
  std::shared_ptr<const SimplicialMesh> mesh;
  std::shared_ptr<const FESpace> W, V, Vvec, Wvec;

  explicit Discretization(std::shared_ptr<const SimplicialMesh> m);
  int dim() const { return mesh->dim(); }
};

struct State {
  int k = 0;
  double t = 0.0;
  DiscreteField u, v, p, phi, h;
};

struct TimeGrid {
  double T_end = 15.0;
  int N = 150;

  double tau() const { return T_end / N; }
  void validate() const;
  bool operator==(const TimeGrid&) const = default;
};

/// Boundary and initial data consumed by the stepper.
struct ProblemData {
  std::function<double(const Point&)> initial_u = [](const Point&) { return 0.0; };
  /// Velocity on the Dirichlet part of the boundary.
  std::function<Vec3(double t, const Point&)> velocity_bc = [](double, const Point&) {
    return Vec3{0, 0, 0};
  };
  std::set<BoundaryTag> velocity_dirichlet{BoundaryTag::Inflow, BoundaryTag::Wall};
  /// Particle volume fraction carried in through the inflow boundary.
  std::function<double(double t, const Point&)> inflow_u = [](double, const Point&) {
    return 0.0;
  };
  /// External field b_e; its normal component drives the potential.
  std::function<Vec3(const Point&)> external_field = [](const Point&) { return Vec3{0, 0, 0}; };
  /// Drops the inflow/outflow terms of the transport equation.
  bool closed_transport = false;
  /// Velocity data and b_e do not depend on time, so fields that do not
  /// see the particles can be reused between steps.
  bool static_data = true;
};

struct SolverSettings {
  NewtonConfig newton{};
  LinearSolverConfig magnetostatics{KrylovMethod::CG, 1e-10, 1e-14, 5000, 0,
                                    PreconditionerKind::ILU0};
  LinearSolverConfig projection{KrylovMethod::CG, 1e-12, 1e-15, 5000, 0,
                                PreconditionerKind::Jacobi};
  LinearSolverConfig navier_stokes{KrylovMethod::GMRES, 1e-8, 1e-14, 2000, 150,
                                   PreconditionerKind::BlockPCD};
  /// Inner solves of the flow preconditioner.
  LinearSolverConfig pcd_velocity{KrylovMethod::GMRES, 1e-3, 1e-14, 200, 60,
                                  PreconditionerKind::SparseLU};
  LinearSolverConfig pcd_laplace{KrylovMethod::CG, 1e-6, 1e-14, 500, 0,
                                 PreconditionerKind::SparseLU};
  LinearSolverConfig transport{KrylovMethod::GMRES, 1e-10, 1e-15, 2000, 100,
                               PreconditionerKind::ILU0};
  bool streamline_diffusion = true;
  int workers = 1;
};

/// A sub-step failed; the previous state is untouched.
class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Net boundary flux of b_e does not vanish.
class IllPosedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepStats {
  NewtonReport magnetostatics, navier_stokes, transport;
  double div_norm = 0.0;
  double u_min = 0.0, u_max = 0.0;
  bool bounds_warning = false;
};

/// The splitting scheme: per step magnetostatics, field projection,
/// Navier-Stokes, transport; the initial step uses the stationary flow.
class CoupledStepper {
 public:
  CoupledStepper(std::shared_ptr<const SimplicialMesh> mesh, NondimParams params,
                 ModelVariant variant, ProblemData data, SolverSettings settings = {});

  const Discretization& disc() const { return disc_; }
  const NondimParams& params() const { return params_; }
  const ModelVariant& variant() const { return variant_; }
  const SolverSettings& settings() const { return settings_; }

  State initialize();
  State advance(const State& prev, double tau);

  /// Zero-mean potential for the given particle density; `guess` seeds
  /// Newton, otherwise the constant-coefficient solution does.
  DiscreteField solve_magnetostatics(const DiscreteField& u_prev,
                                     const DiscreteField* guess = nullptr);
  DiscreteField project_field_strength(const DiscreteField& phi);
  /// tau empty means the stationary problem. Returns (v, p).
  std::pair<DiscreteField, DiscreteField> solve_navier_stokes(const State& prev,
                                                              const DiscreteField& h,
                                                              std::optional<double> tau, double t);
  DiscreteField solve_transport(const DiscreteField& u_prev, const DiscreteField& v,
                                const DiscreteField& h, double tau, double t);

  /// Nonlinear systems of the sub-steps, for Jacobian checks. The potential
  /// system carries the gauge multiplier as its last unknown; the flow system
  /// orders velocity before pressure.
  NonlinearProblem magnetostatics_problem(const DiscreteField& u_prev);
  NonlinearProblem navier_stokes_problem(const State& prev, const DiscreteField& h,
                                         std::optional<double> tau, double t,
                                         bool convection = true);
  NonlinearProblem transport_problem(const DiscreteField& u_prev, const DiscreteField& v,
                                     const DiscreteField& h, double tau, double t);
  /// Preconditioner operators for a flow Jacobian at iterate x.
  std::shared_ptr<PcdOperators> pcd_operators(const SparseMatrix& J, std::span<const double> x,
                                              const State& prev, const DiscreteField& h,
                                              std::optional<double> tau);
  /// Dirichlet data of the flow system at time t (velocity dofs, pinned pressure).
  DirichletConstraint flow_constraints(double t) const;

  /// L2 norm of the divergence projected onto the pressure space.
  double discrete_divergence(const DiscreteField& v);
  EnergyTerms energy_diagnostics(const State& s) const;

  const std::vector<std::string>& call_trace() const { return trace_; }
  void clear_trace() { trace_.clear(); }
  const StepStats& last_stats() const { return stats_; }
  /// Called when u leaves [-0.01, 1.01].
  std::function<void(const std::string&)> on_warning;

 private:
  /// Full: the Langevin coefficient. Unit and WeakField: its constant
  /// large-field and small-field limits, used as linear starting guesses.
  enum class Coefficient { Full, Unit, WeakField };
  NonlinearProblem potential_problem(const DiscreteField& u_prev, Coefficient mode);
  LinearSolve potential_linear_solve() const;
  SparseMatrix augment(const SparseMatrix& K) const;
  Vector boundary_flux_vector();
  void check_bounds(const DiscreteField& u);

  Discretization disc_;
  NondimParams params_;
  ModelVariant variant_;
  ProblemData data_;
  SolverSettings settings_;

  Assembler mag_assembler_, flow_assembler_, transport_assembler_;
  SparseMatrix mass_W_, laplace_W_;
  Vector mean_vector_;  // integrals of the P2 basis
  std::optional<Vector> flux_vector_;
  std::vector<int> outflow_pressure_dofs_;
  std::vector<std::vector<int>> cell_facets_;  // boundary facets owned by each cell
  bool enclosed_ = false;
  std::vector<std::string> trace_;
  StepStats stats_;
};

}  // namespace mdt
