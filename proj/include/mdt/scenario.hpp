#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mdt/stepper.hpp"

namespace mdt {

struct MeshSpec {
  int dim = 2;
  int refine = 2;  // uniform refinements of the base mesh
  double length = 8.0;
  int nx = 16, ny = 2;  // 2D base grid of [0,length]x[0,1]
  double radius = 0.5;  // 3D pipe around the axis x2 = x3 = 0.5
  double base_h = 0.5;  // 3D base mesh size

  bool operator==(const MeshSpec&) const = default;
};

/// Magnet above the vessel. In 2D the field is that of a line dipole; its
/// moment makes the saturated drift speed on the axis below the magnet equal
/// to the peak inflow speed, for the default parameters.
struct DipoleSpec {
  Point position{4.0, 3.5, 0.0};
  Vec3 moment{0.0, 344.0, 0.0};

  bool operator==(const DipoleSpec&) const = default;
};

/// u_in = A exp(-((t - t_center)/t_width)^t_power) exp(-(r/r_width)^r_power),
/// r the distance to the vessel axis.
struct PulseSpec {
  double amplitude = 1.0;
  double t_center = 2.0;
  double t_width = 1.5;
  double t_power = 50.0;
  double r_width = 0.25;
  double r_power = 8.0;

  bool operator==(const PulseSpec&) const = default;
};

struct ScenarioConfig {
  MeshSpec mesh;
  TimeGrid time{15.0, 150};
  NondimParams params;
  ModelVariant variant;
  double v_max = 1.0;
  DipoleSpec dipole;
  PulseSpec pulse;
  int snapshot_stride = 10;
  /// Magnet distances above the top wall; empty means a single run.
  std::vector<double> sweep_distances;

  /// Pipe-experiment values for the given dimension.
  static ScenarioConfig defaults(int dim);
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const ScenarioConfig&) const = default;
};

/// Height of the top wall; magnet distances are measured from it.
constexpr double kTopWall = 1.0;

std::shared_ptr<const SimplicialMesh> build_scenario_mesh(const MeshSpec& spec);

/// Parabolic profile with peak v_max on the axis and zero at the wall.
Vec3 inflow_velocity(const Point& x, double v_max, int dim);
/// Point dipole (3D) or line dipole (2D) field at x; throws at x = x0.
Vec3 dipole_field(const Point& x, const Point& x0, const Vec3& m, int dim);
double inflow_pulse(double t, const Point& x, int dim, const PulseSpec& pulse = {});

/// First moment in x1 over total mass; 0 while the mass is below 1e-14.
double center_of_mass_x1(const DiscreteField& u);
double retained_mass(const DiscreteField& u);
/// Rate at which the pulse carries particles in through the inflow boundary.
double inflow_rate(const DiscreteField& v, const std::function<double(const Point&)>& u_in);

ProblemData make_problem_data(const ScenarioConfig& cfg);

struct DiagnosticsRecord {
  double t = 0.0;
  double R1 = 0.0;
  double total_mass = 0.0;
  double u_min = 0.0, u_max = 0.0;
  double div_norm = 0.0;
  EnergyTerms energy;
  int newton_iters_ns = 0;
  int newton_iters_transport = 0;
  int newton_iters_mag = 0;
};

struct RunCallbacks {
  std::function<void(const DiagnosticsRecord&)> on_record;
  /// Called for k = 0 and every snapshot_stride steps, and for the last step.
  std::function<void(const State&, const CoupledStepper&)> on_snapshot;
  std::function<void(const std::string&)> on_warning;
};

struct SimulationResult {
  std::vector<DiagnosticsRecord> records;
  bool completed = false;
  std::string failure;  // empty when completed
  double influx = 0.0;  // particles delivered through the inflow boundary
  int snapshots = 0;
  std::vector<std::string> warnings;
  State final_state;

  /// Retained over delivered mass at the last completed step.
  double capture_efficiency() const;
};

SimulationResult run_simulation(const ScenarioConfig& cfg, const RunCallbacks& cb = {},
                                const SolverSettings& solvers = {});

struct SweepPoint {
  double distance = 0.0;
  double retained_mass = 0.0;
  double R1 = 0.0;
  double capture_efficiency = 0.0;
  bool completed = false;
  std::string failure;
};

/// Config with the magnet moved to `distance` above the top wall.
ScenarioConfig with_magnet_distance(const ScenarioConfig& cfg, double distance);

/// One run per distance; failed runs are recorded and the sweep continues.
/// `callbacks_for` supplies per-run callbacks (e.g. per-run output files).
std::vector<SweepPoint> run_magnet_distance_sweep(
    const ScenarioConfig& cfg, const std::vector<double>& distances,
    const std::function<RunCallbacks(double distance)>& callbacks_for = {},
    const SolverSettings& solvers = {});

}  // namespace mdt
