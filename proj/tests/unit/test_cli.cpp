#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mdt/io.hpp"

namespace fs = std::filesystem;
using namespace mdt;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mdt_test_cli";

// Runs mdtsim with `args`; stderr goes to <root>/stderr.txt.
int mdtsim(const std::string& args) {
  fs::create_directories(kRoot);
  const std::string cmd = std::string(MDTSIM_PATH) + " --quiet " + args + " > /dev/null 2> " +
                          (kRoot / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const fs::path& p) {
  std::ifstream in(p);
  int n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

int count_snapshots(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir))
    n += e.path().extension() == ".vtk" ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("invalid invocations exit with 2") {
  CHECK(mdtsim("--config missing.cfg") == 2);
  CHECK(slurp(kRoot / "stderr.txt").find("missing.cfg") != std::string::npos);
  CHECK(mdtsim("--variant partial") == 2);
  CHECK(mdtsim("--dim 4") == 2);
  CHECK(mdtsim("--tau 0.7") == 2);
  CHECK(mdtsim("--sweep-distances 2,x") == 2);
  CHECK(mdtsim("--no-such-flag") == 2);

  const fs::path cfg = kRoot / "bad.cfg";
  std::ofstream(cfg) << "[dipole]\nposition = 4, 0.5, 0\n";
  CHECK(mdtsim("--config " + cfg.string()) == 2);
  std::ofstream(cfg) << "[mesh]\nwidth = 3\n";
  CHECK(mdtsim("--config " + cfg.string()) == 2);
  CHECK(slurp(kRoot / "stderr.txt").find("mesh.width") != std::string::npos);
}

TEST_CASE("reduced-model run writes diagnostics, snapshots and manifest") {
  const fs::path out = kRoot / "reduced";
  fs::remove_all(out);
  REQUIRE(mdtsim("--variant reduced --dim 2 --refine 1 --output-dir " + out.string()) == 0);
  CHECK(count_lines(out / "diagnostics.csv") == 1 + 151);
  CHECK(count_snapshots(out) == 16);  // k = 0, 10, ..., 150
  CHECK(fs::exists(out / "snapshot_00150.vtk"));
  const RunManifest m = read_manifest(out / "manifest.json");
  CHECK(m.status == "completed");
  CHECK(m.steps_completed == 150);
  CHECK(m.snapshots == 16);
  const ScenarioConfig echo = parse_config_text(m.config_ini);
  CHECK(echo.variant == ModelVariant{false, false});
  CHECK(echo.mesh.refine == 1);
  CHECK(echo == parse_config(out / "config.ini"));
}

TEST_CASE("flags override the config file; identical runs give identical csv") {
  const fs::path cfg = kRoot / "short.cfg";
  std::ofstream(cfg) << "[time]\nT_end = 3\nN = 30\n[mesh]\nrefine = 2\n";
  const fs::path a = kRoot / "det_a", b = kRoot / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string common = "--config " + cfg.string() + " --refine 0 --tau 0.5 --output-dir ";
  REQUIRE(mdtsim(common + a.string()) == 0);
  REQUIRE(mdtsim(common + b.string()) == 0);
  CHECK(count_lines(a / "diagnostics.csv") == 1 + 7);  // header, k = 0..6
  CHECK(parse_config(a / "config.ini").mesh.refine == 0);
  CHECK(slurp(a / "diagnostics.csv") == slurp(b / "diagnostics.csv"));
}

TEST_CASE("sweep writes one directory per distance and a summary table") {
  const fs::path cfg = kRoot / "sweep.cfg";
  std::ofstream(cfg) << "[time]\nT_end = 1\nN = 2\n[mesh]\nrefine = 0\n";
  const fs::path out = kRoot / "sweep";
  fs::remove_all(out);
  REQUIRE(mdtsim("--config " + cfg.string() + " --sweep-distances 2,3,4,5,6 --output-dir " +
                 out.string()) == 0);
  int dirs = 0;
  for (const auto& e : fs::directory_iterator(out)) dirs += e.is_directory() ? 1 : 0;
  CHECK(dirs == 5);
  for (const char* d : {"distance_2", "distance_6"}) {
    CHECK(fs::exists(out / d / "diagnostics.csv"));
    CHECK(fs::exists(out / d / "manifest.json"));
  }
  CHECK(count_lines(out / "sweep_summary.csv") == 1 + 5);
  CHECK(parse_config(out / "distance_4" / "config.ini").dipole.position[1] == 5.0);
}
