#include "mdt/scenario.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace mdt {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

bool finite_point(const Point& p) {
  return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
}

double axis_distance(const Point& x, int dim) {
  if (dim == 2) return std::abs(x[1] - 0.5);
  return std::hypot(x[1] - 0.5, x[2] - 0.5);
}

// Both moments of u over the mesh: (integral of u, integral of x1 u).
std::pair<double, double> moments(const DiscreteField& u) {
  const FESpace& s = *u.space;
  const auto& rule = quadrature_rule(s.dim(), 2 * s.degree());
  CellValues cv(s, rule);
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t c = 0; c < s.mesh().n_cells(); ++c) {
    cv.reinit(c);
    for (int q = 0; q < cv.n_q(); ++q) {
      const double w = cv.value(u.coeffs, q) * cv.JxW(q);
      m0 += w;
      m1 += cv.point(q)[0] * w;
    }
  }
  return {m0, m1};
}

}  // namespace

ScenarioConfig ScenarioConfig::defaults(int dim) {
  ScenarioConfig c;
  c.mesh.dim = dim;
  if (dim == 3) {
    c.mesh.refine = 3;
    c.dipole.position = {4.0, 0.5, 3.5};
    c.dipole.moment = {0.0, 0.0, 7.9e2};
  }
  return c;
}

void ScenarioConfig::validate() const {
  require(mesh.dim == 2 || mesh.dim == 3, "mesh.dim must be 2 or 3");
  require(mesh.refine >= 0 && mesh.refine <= 8, "mesh.refine must be in [0, 8]");
  require(mesh.length > 0 && std::isfinite(mesh.length), "mesh.length must be positive");
  require(mesh.nx >= 1 && mesh.ny >= 1, "mesh.nx and mesh.ny must be >= 1");
  require(mesh.radius > 0 && mesh.radius <= 0.5, "mesh.radius must be in (0, 0.5]");
  require(mesh.base_h > 0, "mesh.base_h must be positive");
  time.validate();
  params.validate();
  require(v_max > 0 && std::isfinite(v_max), "v_max must be positive");
  require(snapshot_stride >= 1, "snapshot_stride must be >= 1");
  require(finite_point(dipole.position) && finite_point(dipole.moment),
          "dipole position and moment must be finite");
  const Point& p = dipole.position;
  bool inside = false;
  if (mesh.dim == 2) {
    inside = p[0] >= 0 && p[0] <= mesh.length && p[1] >= 0 && p[1] <= kTopWall;
  } else {
    inside = p[0] >= 0 && p[0] <= mesh.length && axis_distance(p, 3) <= mesh.radius;
  }
  require(!inside, "dipole position lies in the closure of the domain");
  require(pulse.amplitude > 0 && pulse.amplitude <= 1, "pulse amplitude must be in (0, 1]");
  require(pulse.t_width > 0 && pulse.r_width > 0, "pulse widths must be positive");
  require(pulse.t_power > 0 && pulse.r_power > 0, "pulse powers must be positive");
  for (double d : sweep_distances) require(d > 0 && std::isfinite(d), "sweep distances must be > 0");
}

std::shared_ptr<const SimplicialMesh> build_scenario_mesh(const MeshSpec& spec) {
  SimplicialMesh m = spec.dim == 2 ? build_channel_2d(spec.length, kTopWall, spec.nx, spec.ny)
                                   : build_pipe_3d(spec.radius, spec.length, spec.base_h);
  for (int l = 0; l < spec.refine; ++l) m = refine_uniform(m);
  return std::make_shared<const SimplicialMesh>(std::move(m));
}

Vec3 inflow_velocity(const Point& x, double v_max, int dim) {
  double r2 = (x[1] - 0.5) * (x[1] - 0.5);
  if (dim == 3) r2 += (x[2] - 0.5) * (x[2] - 0.5);
  return {-4.0 * v_max * r2 + v_max, 0.0, 0.0};
}

Vec3 dipole_field(const Point& x, const Point& x0, const Vec3& m, int dim) {
  Vec3 r{x[0] - x0[0], x[1] - x0[1], dim == 3 ? x[2] - x0[2] : 0.0};
  const double d = norm3(r);
  if (!(d > 0.0)) throw std::invalid_argument("dipole field evaluated at the dipole position");
  const double mr = dot3(m, r);
  Vec3 b;
  if (dim == 3) {
    const double s = 1.0 / (4.0 * std::numbers::pi);
    const double d3 = d * d * d, d5 = d3 * d * d;
    for (int i = 0; i < 3; ++i) b[i] = s * (3.0 * mr * r[i] / d5 - m[i] / d3);
  } else {
    const double s = 1.0 / (2.0 * std::numbers::pi);
    const double d2 = d * d, d4 = d2 * d2;
    for (int i = 0; i < 2; ++i) b[i] = s * (2.0 * mr * r[i] / d4 - m[i] / d2);
    b[2] = 0.0;
  }
  return b;
}

double inflow_pulse(double t, const Point& x, int dim, const PulseSpec& p) {
  const double a = std::pow(std::abs(t - p.t_center) / p.t_width, p.t_power);
  const double b = std::pow(axis_distance(x, dim) / p.r_width, p.r_power);
  return p.amplitude * std::exp(-a) * std::exp(-b);
}

double center_of_mass_x1(const DiscreteField& u) {
  const auto [m0, m1] = moments(u);
  return m0 < 1e-14 ? 0.0 : m1 / m0;
}

double retained_mass(const DiscreteField& u) { return moments(u).first; }

double inflow_rate(const DiscreteField& v, const std::function<double(const Point&)>& u_in) {
  const FESpace& s = *v.space;
  const auto& mesh = s.mesh();
  FacetValues fv(s, 4);
  double rate = 0.0;
  for (std::size_t f = 0; f < mesh.n_boundary_facets(); ++f) {
    if (mesh.boundary_facets()[f].tag != BoundaryTag::Inflow) continue;
    fv.reinit(f);
    for (int q = 0; q < fv.n_q(); ++q) {
      double vn = 0.0;
      for (int i = 0; i < s.components(); ++i) vn += fv.value(v.coeffs, q, i) * fv.normal()[i];
      rate -= u_in(fv.point(q)) * vn * fv.JxW(q);
    }
  }
  return rate;
}

ProblemData make_problem_data(const ScenarioConfig& cfg) {
  const int dim = cfg.mesh.dim;
  const double vmax = cfg.v_max;
  const DipoleSpec dip = cfg.dipole;
  const PulseSpec pulse = cfg.pulse;
  ProblemData d;
  d.initial_u = [](const Point&) { return 0.0; };
  d.velocity_bc = [vmax, dim](double, const Point& x) {
    return x[0] < 1e-12 ? inflow_velocity(x, vmax, dim) : Vec3{0.0, 0.0, 0.0};
  };
  d.velocity_dirichlet = {BoundaryTag::Inflow, BoundaryTag::Wall};
  d.inflow_u = [pulse, dim](double t, const Point& x) { return inflow_pulse(t, x, dim, pulse); };
  d.external_field = [dip, dim](const Point& x) {
    return dipole_field(x, dip.position, dip.moment, dim);
  };
  d.closed_transport = false;
  d.static_data = true;
  return d;
}

double SimulationResult::capture_efficiency() const {
  if (records.empty() || !(influx > 0.0)) return 0.0;
  return records.back().total_mass / influx;
}

namespace {

DiagnosticsRecord make_record(const State& s, const CoupledStepper& st) {
  DiagnosticsRecord r;
  r.t = s.t;
  const auto [m0, m1] = moments(s.u);
  r.total_mass = m0;
  r.R1 = m0 < 1e-14 ? 0.0 : m1 / m0;
  const StepStats& ss = st.last_stats();
  r.u_min = ss.u_min;
  r.u_max = ss.u_max;
  r.div_norm = ss.div_norm;
  r.energy = st.energy_diagnostics(s);
  r.newton_iters_ns = ss.navier_stokes.iterations;
  r.newton_iters_transport = ss.transport.iterations;
  r.newton_iters_mag = ss.magnetostatics.iterations;
  return r;
}

}  // namespace

SimulationResult run_simulation(const ScenarioConfig& cfg, const RunCallbacks& cb,
                                const SolverSettings& solvers) {
  cfg.validate();
  SimulationResult res;
  auto mesh = build_scenario_mesh(cfg.mesh);
  const ProblemData data = make_problem_data(cfg);
  CoupledStepper st(mesh, cfg.params, cfg.variant, data, solvers);
  st.on_warning = [&](const std::string& w) {
    res.warnings.push_back(w);
    if (cb.on_warning) cb.on_warning(w);
  };
  auto emit = [&](const State& s, bool snapshot) {
    res.records.push_back(make_record(s, st));
    if (cb.on_record) cb.on_record(res.records.back());
    if (snapshot && cb.on_snapshot) {
      cb.on_snapshot(s, st);
      ++res.snapshots;
    }
  };
  try {
    State s = st.initialize();
    emit(s, true);
    const double tau = cfg.time.tau();
    for (int k = 1; k <= cfg.time.N; ++k) {
      State next = st.advance(s, tau);
      const double t = next.t;
      res.influx += tau * inflow_rate(next.v, [&](const Point& x) {
        return data.inflow_u(t, x);
      });
      s = std::move(next);
      emit(s, k % cfg.snapshot_stride == 0 || k == cfg.time.N);
      st.clear_trace();
    }
    res.final_state = std::move(s);
    res.completed = true;
  } catch (const StepFailure& e) {
    res.failure = e.what();
  } catch (const IllPosedError& e) {
    res.failure = e.what();
  }
  return res;
}

ScenarioConfig with_magnet_distance(const ScenarioConfig& cfg, double distance) {
  ScenarioConfig c = cfg;
  c.dipole.position[cfg.mesh.dim == 2 ? 1 : 2] = kTopWall + distance;
  c.sweep_distances.clear();
  return c;
}

std::vector<SweepPoint> run_magnet_distance_sweep(
    const ScenarioConfig& cfg, const std::vector<double>& distances,
    const std::function<RunCallbacks(double)>& callbacks_for, const SolverSettings& solvers) {
  if (distances.size() < 2) throw std::invalid_argument("a sweep needs at least two distances");
  std::vector<SweepPoint> out;
  for (double d : distances) {
    SweepPoint p;
    p.distance = d;
    try {
      const ScenarioConfig c = with_magnet_distance(cfg, d);
      const SimulationResult r = run_simulation(c, callbacks_for ? callbacks_for(d) : RunCallbacks{},
                                                solvers);
      p.completed = r.completed;
      p.failure = r.failure;
      if (!r.records.empty()) {
        p.retained_mass = r.records.back().total_mass;
        p.R1 = r.records.back().R1;
      }
      p.capture_efficiency = r.capture_efficiency();
    } catch (const std::exception& e) {
      p.failure = e.what();
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace mdt
