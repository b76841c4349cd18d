#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mdt/scenario.hpp"

namespace mdt {

/// Malformed or unreadable configuration: unknown key, bad value, missing file.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// INI text with sections [mesh] [time] [params] [variant] [dipole] [pulse]
/// [sweep]. Omitted keys keep the defaults of ScenarioConfig::defaults(dim).
/// `overrides` are (section.key, value) pairs applied on top of the text, in
/// order. Throws ConfigError for syntax and key errors and
/// std::invalid_argument when the resolved config fails validation.
ScenarioConfig parse_config_text(
    const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides = {});
ScenarioConfig parse_config(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Every field, at 17 significant digits; parses back to an equal config.
std::string config_to_ini(const ScenarioConfig& cfg);

/// full, no-fluid, no-magnet, reduced.
ModelVariant parse_variant(const std::string& name);
std::string variant_name(const ModelVariant& v);

/// Comma-separated numbers, e.g. "2,3.5,6".
std::vector<double> parse_number_list(const std::string& text);

// ---------------------------------------------------------------- diagnostics

extern const char* const kDiagnosticsHeader;
void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const DiagnosticsRecord& r);

// ---------------------------------------------------------------- snapshots

/// Legacy ASCII unstructured grid on the once-refined mesh, whose vertices
/// are the P2 nodes. Point data: scalars u, p, phi and vectors v, h.
void write_vtk_snapshot(const State& s, const std::filesystem::path& path);

struct VtkGrid {
  std::vector<Point> points;
  std::vector<std::vector<int>> cells;
  std::vector<int> cell_types;
  std::map<std::string, std::vector<double>> scalars;
  std::map<std::string, std::vector<Vec3>> vectors;
};

/// Reads the subset of the legacy format written above.
VtkGrid read_vtk(const std::filesystem::path& path);

/// "snapshot_00010.vtk" for step 10.
std::string snapshot_name(int step);

// ---------------------------------------------------------------- manifest

struct RunManifest {
  std::string config_ini;
  std::string version;
  std::vector<std::pair<std::string, double>> phase_seconds;
  std::string status;  // "completed" or "failed"
  std::string failure;
  int steps_completed = 0;
  int snapshots = 0;
  double influx = 0.0;
  double capture_efficiency = 0.0;
};

/// Written to a temporary file and renamed into place.
void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

const char* code_version();

}  // namespace mdt
