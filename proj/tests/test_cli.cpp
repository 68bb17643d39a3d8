#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
const fs::path kScenarios = MAGLAB_SCENARIOS;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "maglab_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = std::string(MAGLAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  json j;
  in >> j;
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }
}  // namespace

TEST_CASE("mane on the zero field") {
  const fs::path out = scratch("mane_flat");
  REQUIRE(run("mane --config " + (kScenarios / "flat_zero.json").string() + " --out " + out.string()) == 0);
  const json j = read_json(out / "mane.json");
  for (const char* k : {"c_u", "c_0"}) {
    CHECK(j[k]["certified_lower"].get<double>() == 0.0);
    CHECK(j[k]["heuristic_upper"].get<double>() <= 1e-3);
  }
  CHECK(j["witnesses_valid"].get<bool>());
  const json m = read_json(out / "manifest.json");
  CHECK(m["command"] == "mane");
  CHECK(m["files"].size() == 1);
}

TEST_CASE("index on a stored orbit file") {
  const fs::path dir = scratch("index_file");
  const fs::path ref = kScenarios / "reference.json";
  REQUIRE(run("descend --config " + ref.string() + " --out " + (dir / "descend").string()) == 0);
  REQUIRE(fs::exists(dir / "descend" / "alpha_orbit.json"));
  const json reg = read_json(dir / "descend" / "registry.json");
  CHECK(reg.size() == 1);

  json cfg = read_json(ref);
  cfg["index"] = {{"orbit_file", "descend/alpha_orbit.json"}, {"N", 96}};
  write(dir / "config.json", cfg);
  REQUIRE(run("index --config " + (dir / "config.json").string() + " --out " + (dir / "index").string()) == 0);
  const json j = read_json(dir / "index" / "index.json");
  CHECK(j["bott_iteration_pass"].get<bool>());
  CHECK(j["i"] == 0);
  CHECK(j["i_T"] == 0);
  CHECK(fs::exists(dir / "index" / "bott.csv"));
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(run("flow --config " + (dir / "missing.json").string() + " --out " + dir.string()) == 2);
  CHECK(run("teleport --config " + (kScenarios / "reference.json").string()) == 2);
  CHECK(run("flow") == 2);

  write(dir / "unknown.json", {{"surface", json::object()}, {"kappa", 0.1}, {"bogus", 1}});
  CHECK(run("flow --config " + (dir / "unknown.json").string() + " --out " + (dir / "a").string()) == 2);
  CHECK(read_json(dir / "a" / "failure.json")["kind"] == "config");

  write(dir / "badsurface.json", {{"surface", {{"fourier_u", {{0, 1, 0.1}}}}}});
  CHECK(run("geometry-check --config " + (dir / "badsurface.json").string() + " --out " + (dir / "b").string()) == 2);

  json cfg = read_json(kScenarios / "reference.json");
  cfg["mane"] = {{"window", {0.0, 0.3}}, {"budget", {{"max_strip_length", 4}}}};
  write(dir / "narrow.json", cfg);
  CHECK(run("mane --config " + (dir / "narrow.json").string() + " --out " + (dir / "c").string()) == 3);
  const json f = read_json(dir / "c" / "failure.json");
  CHECK(f["kind"] == "window-exhausted");
  CHECK(f["exit_code"] == 3);
}

TEST_CASE("artifacts are byte-identical across runs") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const auto& cmd : {"flow", "cylinder", "minimax"}) {
    const std::string cfg = " --config " + (kScenarios / "reference.json").string();
    REQUIRE(run(std::string(cmd) + cfg + " --out " + a.string() + " --workers 1") == 0);
    REQUIRE(run(std::string(cmd) + cfg + " --out " + b.string() + " --workers 2") == 0);
  }
  int compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    ++compared;
  }
  CHECK(compared >= 8);
}

TEST_CASE("geometry check of the scenarios") {
  for (const char* name : {"reference", "flat_zero", "bump", "tilted_bump", "double_well"}) {
    const fs::path out = scratch(std::string("geo_") + name);
    CHECK(run("geometry-check --config " + (kScenarios / (std::string(name) + ".json")).string() + " --out " + out.string()) == 0);
    CHECK(read_json(out / "geometry_check.json")["pass"].get<bool>());
  }
}
