#include "mdt/io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <optional>
#include <unordered_map>

#include "json.hpp"

#ifndef MDT_VERSION
#define MDT_VERSION "unknown"
#endif

namespace mdt {

namespace pt = boost::property_tree;

const char* code_version() { return MDT_VERSION; }

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Shortest representation that reads back to the same double.
std::string exact(double x) {
  std::array<char, 32> buf;
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), r.ptr);
}

double to_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double x = 0.0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, x);
  if (s.empty() || r.ec != std::errc() || r.ptr != end || !std::isfinite(x))
    throw ConfigError("config key " + key + ": expected a number, got '" + raw + "'");
  return x;
}

int to_int(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  int x = 0;
  const char* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, x);
  if (s.empty() || r.ec != std::errc() || r.ptr != end)
    throw ConfigError("config key " + key + ": expected an integer, got '" + raw + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config key " + key + ": expected true or false, got '" + raw + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_number(key, item));
  return out;
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + exact(xs[i]);
  return s;
}

Point to_point(const std::string& key, const std::string& raw) {
  const auto xs = to_list(key, raw);
  if (xs.size() != 2 && xs.size() != 3)
    throw ConfigError("config key " + key + ": expected 2 or 3 components, got '" + raw + "'");
  return {xs[0], xs[1], xs.size() == 3 ? xs[2] : 0.0};
}

struct Field {
  std::function<void(ScenarioConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

template <class T>
Field number(T ScenarioConfig::*group, double T::*member) {
  return {[=](ScenarioConfig& c, const std::string& k, const std::string& v) {
            c.*group.*member = to_number(k, v);
          },
          [=](const ScenarioConfig& c) { return exact(c.*group.*member); }};
}

template <class T>
Field integer(T ScenarioConfig::*group, int T::*member) {
  return {[=](ScenarioConfig& c, const std::string& k, const std::string& v) {
            c.*group.*member = to_int(k, v);
          },
          [=](const ScenarioConfig& c) { return std::to_string(c.*group.*member); }};
}

Field flag(bool ModelVariant::*member) {
  return {[=](ScenarioConfig& c, const std::string& k, const std::string& v) {
            c.variant.*member = to_bool(k, v);
          },
          [=](const ScenarioConfig& c) { return std::string(c.variant.*member ? "true" : "false"); }};
}

// Keys in echo order. time.tau and variant.name are inputs only.
const std::vector<std::pair<std::string, Field>>& schema() {
  using C = ScenarioConfig;
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"mesh.dim", integer(&C::mesh, &MeshSpec::dim)},
      {"mesh.refine", integer(&C::mesh, &MeshSpec::refine)},
      {"mesh.length", number(&C::mesh, &MeshSpec::length)},
      {"mesh.nx", integer(&C::mesh, &MeshSpec::nx)},
      {"mesh.ny", integer(&C::mesh, &MeshSpec::ny)},
      {"mesh.radius", number(&C::mesh, &MeshSpec::radius)},
      {"mesh.base_h", number(&C::mesh, &MeshSpec::base_h)},
      {"time.T_end", number(&C::time, &TimeGrid::T_end)},
      {"time.N", integer(&C::time, &TimeGrid::N)},
      {"time.snapshot_stride",
       {[](C& c, const std::string& k, const std::string& v) { c.snapshot_stride = to_int(k, v); },
        [](const C& c) { return std::to_string(c.snapshot_stride); }}},
      {"params.Pe", number(&C::params, &NondimParams::Pe)},
      {"params.Re", number(&C::params, &NondimParams::Re)},
      {"params.Ke_star", number(&C::params, &NondimParams::Ke_star)},
      {"params.Ke", number(&C::params, &NondimParams::Ke)},
      {"params.rho_ratio", number(&C::params, &NondimParams::rho_ratio)},
      {"params.M_bar", number(&C::params, &NondimParams::M_bar)},
      {"params.xi_bar", number(&C::params, &NondimParams::xi_bar)},
      {"params.v_max",
       {[](C& c, const std::string& k, const std::string& v) { c.v_max = to_number(k, v); },
        [](const C& c) { return exact(c.v_max); }}},
      {"variant.fluid_response", flag(&ModelVariant::fluid_response)},
      {"variant.magnet_response", flag(&ModelVariant::magnet_response)},
      {"dipole.position",
       {[](C& c, const std::string& k, const std::string& v) { c.dipole.position = to_point(k, v); },
        [](const C& c) {
          const Point& p = c.dipole.position;
          return join({p[0], p[1], p[2]});
        }}},
      {"dipole.moment",
       {[](C& c, const std::string& k, const std::string& v) { c.dipole.moment = to_point(k, v); },
        [](const C& c) {
          const Vec3& m = c.dipole.moment;
          return join({m[0], m[1], m[2]});
        }}},
      {"pulse.amplitude", number(&C::pulse, &PulseSpec::amplitude)},
      {"pulse.t_center", number(&C::pulse, &PulseSpec::t_center)},
      {"pulse.t_width", number(&C::pulse, &PulseSpec::t_width)},
      {"pulse.t_power", number(&C::pulse, &PulseSpec::t_power)},
      {"pulse.r_width", number(&C::pulse, &PulseSpec::r_width)},
      {"pulse.r_power", number(&C::pulse, &PulseSpec::r_power)},
      {"sweep.distances",
       {[](C& c, const std::string& k, const std::string& v) {
          c.sweep_distances = trim(v).empty() ? std::vector<double>{} : to_list(k, v);
        },
        [](const C& c) { return join(c.sweep_distances); }}},
  };
  return fields;
}

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : schema())
    if (k == key) return &f;
  return nullptr;
}

bool input_only(const std::string& key) { return key == "time.tau" || key == "variant.name"; }

// Flattened "section.key" -> value, in file order, with the top-level
// `variant = name` shorthand folded into the [variant] section.
std::vector<std::pair<std::string, std::string>> flatten(const pt::ptree& tree) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, child] : tree) {
    if (child.empty()) {
      bool section = false;  // an empty section
      for (const auto& [k, f] : schema()) section |= k.rfind(name + ".", 0) == 0;
      if (section && trim(child.data()).empty()) continue;
      if (name == "variant") {
        out.emplace_back("variant.name", child.data());
        continue;
      }
      throw ConfigError("unknown config key '" + name + "'");
    }
    for (const auto& [key, leaf] : child) out.emplace_back(name + "." + key, leaf.data());
  }
  return out;
}

// Later entries replace earlier ones; tau and N, and the variant name and
// its flags, replace each other.
void put(std::vector<std::pair<std::string, std::string>>& kv, const std::string& key,
         const std::string& value) {
  static const std::unordered_map<std::string, std::vector<std::string>> displaces = {
      {"time.tau", {"time.N"}},
      {"time.N", {"time.tau"}},
      {"variant.name", {"variant.fluid_response", "variant.magnet_response"}},
      {"variant.fluid_response", {"variant.name"}},
      {"variant.magnet_response", {"variant.name"}},
  };
  std::erase_if(kv, [&](const auto& e) { return e.first == key; });
  if (auto it = displaces.find(key); it != displaces.end())
    std::erase_if(kv, [&](const auto& e) {
      return std::find(it->second.begin(), it->second.end(), e.first) != it->second.end();
    });
  kv.emplace_back(key, value);
}

ScenarioConfig resolve(const std::vector<std::pair<std::string, std::string>>& entries,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& [k, v] : entries) {
    if (!find_field(k) && !input_only(k)) throw ConfigError("unknown config key '" + k + "'");
    if (std::any_of(kv.begin(), kv.end(), [&](const auto& e) { return e.first == k; }))
      throw ConfigError("config key '" + k + "' given twice");
    kv.emplace_back(k, v);
  }
  for (const auto& [k, v] : overrides) {
    if (!find_field(k) && !input_only(k)) throw ConfigError("unknown config key '" + k + "'");
    put(kv, k, v);
  }

  int dim = 2;
  for (const auto& [k, v] : kv)
    if (k == "mesh.dim") dim = to_int(k, v);
  if (dim != 2 && dim != 3) throw ConfigError("config key mesh.dim: must be 2 or 3");
  ScenarioConfig c = ScenarioConfig::defaults(dim);

  std::optional<double> tau;
  bool have_n = false;
  for (const auto& [k, v] : kv) {
    if (k == "time.tau") {
      tau = to_number(k, v);
    } else if (k == "variant.name") {
      c.variant = parse_variant(trim(v));
    } else {
      have_n |= k == "time.N";
      find_field(k)->set(c, k, v);
    }
  }
  if (tau) {
    if (!(*tau > 0.0)) throw ConfigError("config key time.tau: must be > 0");
    const double n = std::round(c.time.T_end / *tau);
    if (n < 1 || std::abs(n * *tau - c.time.T_end) > 1e-9 * c.time.T_end)
      throw ConfigError("config key time.tau: " + exact(*tau) + " does not divide T_end = " +
                        exact(c.time.T_end));
    if (have_n && c.time.N != static_cast<int>(n))
      throw ConfigError("config keys time.tau and time.N disagree");
    c.time.N = static_cast<int>(n);
  }
  c.validate();
  return c;
}

}  // namespace

ModelVariant parse_variant(const std::string& name) {
  if (name == "full") return {true, true};
  if (name == "no-fluid") return {false, true};
  if (name == "no-magnet") return {true, false};
  if (name == "reduced") return {false, false};
  throw ConfigError("unknown variant '" + name + "' (full, no-fluid, no-magnet, reduced)");
}

std::string variant_name(const ModelVariant& v) {
  if (v.fluid_response) return v.magnet_response ? "full" : "no-magnet";
  return v.magnet_response ? "no-fluid" : "reduced";
}

std::vector<double> parse_number_list(const std::string& text) { return to_list("list", text); }

ScenarioConfig parse_config_text(const std::string& text,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax error: " + e.message() + " at line " +
                      std::to_string(e.line()));
  }
  return resolve(flatten(tree), overrides);
}

ScenarioConfig parse_config(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

std::string config_to_ini(const ScenarioConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, field] : schema()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out << (section.empty() ? "" : "\n") << "[" << s << "]\n";
      section = s;
    }
    out << key.substr(dot + 1) << " = " << field.get(cfg) << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------- diagnostics

const char* const kDiagnosticsHeader =
    "t,R1,total_mass,u_min,u_max,div_norm,E_kin,E_mix,E_mag,D_kin,D_drag,newton_iters_ns,"
    "newton_iters_transport,newton_iters_mag";

void write_csv_header(std::ostream& out) { out << kDiagnosticsHeader << '\n'; }

void write_csv_row(std::ostream& out, const DiagnosticsRecord& r) {
  char buf[512];
  const EnergyTerms& e = r.energy;
  std::snprintf(buf, sizeof buf,
                "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d\n",
                r.t, r.R1, r.total_mass, r.u_min, r.u_max, r.div_norm, e.E_kin, e.E_mix,
                e.E_mag, e.D_kin, e.D_drag, r.newton_iters_ns, r.newton_iters_transport,
                r.newton_iters_mag);
  out << buf;
}

// ---------------------------------------------------------------- snapshots

std::string snapshot_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snapshot_%05d.vtk", step);
  return buf;
}

void write_vtk_snapshot(const State& s, const std::filesystem::path& path) {
  const FESpace* any = nullptr;
  for (const DiscreteField* f : {&s.u, &s.p, &s.phi, &s.v, &s.h})
    if (f->space) {
      any = f->space.get();
      break;
    }
  if (!any) throw std::invalid_argument("snapshot of a state without fields");
  const SimplicialMesh& mesh = any->mesh();
  const SimplicialMesh out_mesh = refine_uniform(mesh);
  const int dim = mesh.dim();
  const std::size_t n = out_mesh.n_vertices();

  auto key = [](const Point& x) {
    return std::array<long long, 3>{std::llround(x[0] * 1e9), std::llround(x[1] * 1e9),
                                    std::llround(x[2] * 1e9)};
  };
  std::map<std::array<long long, 3>, int> index;
  for (std::size_t i = 0; i < n; ++i) index[key(out_mesh.vertex(i))] = static_cast<int>(i);

  // Each output vertex is a vertex or edge midpoint of some input cell;
  // record one (cell, barycentric) pair for it.
  std::vector<std::pair<std::size_t, Bary>> where(n, {0, Bary{}});
  std::vector<char> found(n, 0);
  for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
    std::vector<Bary> nodes;
    for (int i = 0; i <= dim; ++i) {
      Bary b{};
      b[i] = 1.0;
      nodes.push_back(b);
      for (int j = i + 1; j <= dim; ++j) {
        Bary m{};
        m[i] = m[j] = 0.5;
        nodes.push_back(m);
      }
    }
    for (const Bary& b : nodes) {
      const auto it = index.find(key(bary_to_point(mesh, c, b)));
      if (it == index.end()) throw std::logic_error("refined mesh misses a P2 node");
      if (!found[it->second]) where[it->second] = {c, b};
      found[it->second] = 1;
    }
  }

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "# vtk DataFile Version 3.0\n"
      << "mdt t=" << exact(s.t) << " k=" << s.k << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n << " double\n";
  for (const Point& x : out_mesh.vertices())
    out << exact(x[0]) << ' ' << exact(x[1]) << ' ' << exact(x[2]) << '\n';
  const std::size_t nc = out_mesh.n_cells();
  out << "CELLS " << nc << ' ' << nc * (dim + 2) << '\n';
  for (const auto& cell : out_mesh.cells()) {
    out << dim + 1;
    for (int i = 0; i <= dim; ++i) out << ' ' << cell[i];
    out << '\n';
  }
  out << "CELL_TYPES " << nc << '\n';
  for (std::size_t c = 0; c < nc; ++c) out << (dim == 2 ? 5 : 10) << '\n';

  auto sample = [&](const DiscreteField& f, std::size_t i, int comp) {
    if (!f.space || comp >= f.space->components()) return 0.0;
    return f.value(where[i].first, where[i].second, comp);
  };
  out << "POINT_DATA " << n << '\n';
  for (const auto& [name, f] :
       {std::pair<const char*, const DiscreteField*>{"u", &s.u}, {"p", &s.p}, {"phi", &s.phi}}) {
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (std::size_t i = 0; i < n; ++i) out << exact(sample(*f, i, 0)) << '\n';
  }
  for (const auto& [name, f] :
       {std::pair<const char*, const DiscreteField*>{"v", &s.v}, {"h", &s.h}}) {
    out << "VECTORS " << name << " double\n";
    for (std::size_t i = 0; i < n; ++i)
      out << exact(sample(*f, i, 0)) << ' ' << exact(sample(*f, i, 1)) << ' '
          << exact(sample(*f, i, 2)) << '\n';
  }
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

VtkGrid read_vtk(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line.rfind("# vtk DataFile", 0) != 0) throw std::runtime_error("not a legacy VTK file");
  std::getline(in, line);  // title
  std::getline(in, line);
  if (trim(line) != "ASCII") throw std::runtime_error("only ASCII VTK files are supported");

  auto fail = [&](const std::string& what) {
    throw std::runtime_error("malformed VTK file '" + path.string() + "': " + what);
  };
  VtkGrid g;
  std::size_t n_point_data = 0;
  std::string word;
  while (in >> word) {
    if (word == "DATASET") {
      in >> word;
      if (word != "UNSTRUCTURED_GRID") fail("dataset " + word);
    } else if (word == "POINTS") {
      std::size_t n;
      in >> n >> word;
      g.points.resize(n);
      for (auto& x : g.points) in >> x[0] >> x[1] >> x[2];
    } else if (word == "CELLS") {
      std::size_t n, size;
      in >> n >> size;
      g.cells.resize(n);
      for (auto& c : g.cells) {
        int k;
        in >> k;
        c.resize(k);
        for (int& v : c) in >> v;
      }
    } else if (word == "CELL_TYPES") {
      std::size_t n;
      in >> n;
      g.cell_types.resize(n);
      for (int& t : g.cell_types) in >> t;
    } else if (word == "POINT_DATA") {
      in >> n_point_data;
    } else if (word == "SCALARS") {
      std::string name, type;
      in >> name >> type;
      std::getline(in, line);  // optional component count
      in >> word >> line;      // LOOKUP_TABLE name
      if (word != "LOOKUP_TABLE") fail("SCALARS without LOOKUP_TABLE");
      auto& vals = g.scalars[name];
      vals.resize(n_point_data);
      for (double& x : vals) in >> x;
    } else if (word == "VECTORS") {
      std::string name, type;
      in >> name >> type;
      auto& vals = g.vectors[name];
      vals.resize(n_point_data);
      for (auto& x : vals) in >> x[0] >> x[1] >> x[2];
    } else {
      fail("unexpected token '" + word + "'");
    }
    if (in.fail()) fail("truncated after " + word);
  }
  return g;
}

// ---------------------------------------------------------------- manifest

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["status"] = m.status;
  j["failure"] = m.failure;
  j["steps_completed"] = m.steps_completed;
  j["snapshots"] = m.snapshots;
  j["influx"] = m.influx;
  j["capture_efficiency"] = m.capture_efficiency;
  nlohmann::ordered_json phases = nlohmann::ordered_json::object();
  for (const auto& [name, sec] : m.phase_seconds) phases[name] = sec;
  j["wall_clock_seconds"] = phases;
  j["config"] = m.config_ini;
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write to '" + tmp.string() + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  const auto j = nlohmann::ordered_json::parse(in);
  RunManifest m;
  m.version = j.at("version");
  m.status = j.at("status");
  m.failure = j.at("failure");
  m.steps_completed = j.at("steps_completed");
  m.snapshots = j.at("snapshots");
  m.influx = j.at("influx");
  m.capture_efficiency = j.at("capture_efficiency");
  for (const auto& [name, sec] : j.at("wall_clock_seconds").items())
    m.phase_seconds.emplace_back(name, sec.get<double>());
  m.config_ini = j.at("config");
  return m;
}

}  // namespace mdt
