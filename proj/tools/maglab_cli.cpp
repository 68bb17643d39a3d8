#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "maglab/continuation.hpp"
#include "maglab/errors.hpp"
#include "maglab/experiment.hpp"
#include "maglab/index.hpp"
#include "maglab/localmin.hpp"
#include "maglab/mane.hpp"
#include "maglab/minimax.hpp"
#include "maglab/parallel.hpp"

using namespace maglab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
  json config;
  fs::path config_dir;
  fs::path out;
  int workers = 1;
  unsigned long long seed = 1;
  bool verbose = false;
  std::vector<std::string> files;
};

void log(const Context& c, const std::string& msg) {
  if (c.verbose) std::cerr << "[maglab] " << msg << "\n";
}

// Doubles are written with 12 significant digits so artifacts compare byte for byte.
json canonical(const json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) return nullptr;
    return std::stod(fmt::format("{:.12g}", v));
  }
  if (j.is_object()) {
    json o = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) o[it.key()] = canonical(it.value());
    return o;
  }
  if (j.is_array()) {
    json a = json::array();
    for (const auto& x : j) a.push_back(canonical(x));
    return a;
  }
  return j;
}

void write_json(Context& c, const std::string& name, const json& j) {
  std::ofstream f(c.out / name);
  f << canonical(j).dump(2) << "\n";
  c.files.push_back(name);
}

void write_text(Context& c, const std::string& name, const std::string& text) {
  std::ofstream f(c.out / name);
  f << text;
  c.files.push_back(name);
}

// Rejects keys outside the allowed set.
void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(fmt::format("{}: unknown key '{}'", where, it.key()));
}

json section(const Context& c, const std::string& name, const std::set<std::string>& allowed) {
  const json j = c.config.value(name, json::object());
  check_keys(j, name, allowed);
  return j;
}

template <class T>
T get(const json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("key '{}': {}", key, e.what()));
  }
}

Vec2 vec2(const json& j, const std::string& key, const Vec2& fallback) {
  const auto v = get<std::vector<double>>(j, key, {fallback.x(), fallback.y()});
  if (v.size() != 2) throw ConfigError(fmt::format("key '{}': expected two numbers", key));
  return Vec2(v[0], v[1]);
}

SurfaceModel load_config_surface(const Context& c) {
  if (c.config.contains("surface")) return surface_from_json(c.config.at("surface"));
  if (c.config.contains("surface_file")) return load_surface((c.config_dir / get<std::string>(c.config, "surface_file", "")).string());
  throw ConfigError("config needs 'surface' or 'surface_file'");
}

double config_kappa(const Context& c) {
  const double k = get<double>(c.config, "kappa", 0.0);
  if (!(k > 0.0)) throw ConfigError("config: 'kappa' must be positive");
  return k;
}

SeedFamily seed_family(const json& j) {
  SeedFamily f;
  check_keys(j, "seeds", {"radii", "centers_per_side", "both_orientations", "windings", "period_factors", "N", "N_final",
                          "scan_max_iter", "scan_action_floor"});
  f.radii = get(j, "radii", f.radii);
  f.centers_per_side = get(j, "centers_per_side", f.centers_per_side);
  f.both_orientations = get(j, "both_orientations", f.both_orientations);
  if (j.contains("windings")) {
    f.windings.clear();
    for (const auto& w : get<std::vector<std::vector<int>>>(j, "windings", {})) {
      if (w.size() != 2) throw ConfigError("seeds.windings: expected pairs");
      f.windings.emplace_back(w[0], w[1]);
    }
  }
  f.period_factors = get(j, "period_factors", f.period_factors);
  f.N = get(j, "N", f.N);
  f.N_final = get(j, "N_final", f.N_final);
  f.scan_max_iter = get(j, "scan_max_iter", f.scan_max_iter);
  f.scan_action_floor = get(j, "scan_action_floor", f.scan_action_floor);
  return f;
}

MountainPassOptions mp_options(const json& j, MountainPassOptions m) {
  check_keys(j, "mountain_pass", {"nodes", "N", "max_iter", "grad_tol", "climb_after", "step0", "trust_radius",
                                  "newton_capture", "refine"});
  m.nodes = get(j, "nodes", m.nodes);
  m.N = get(j, "N", m.N);
  m.max_iter = get(j, "max_iter", m.max_iter);
  m.grad_tol = get(j, "grad_tol", m.grad_tol);
  m.climb_after = get(j, "climb_after", m.climb_after);
  m.step0 = get(j, "step0", m.step0);
  m.trust_radius = get(j, "trust_radius", m.trust_radius);
  m.newton_capture = get(j, "newton_capture", m.newton_capture);
  m.refine = get(j, "refine", m.refine);
  return m;
}

// alpha for the orbit-based subcommands: a stored orbit file or the minimizer search
Orbit config_orbit(const Context& c, const SurfaceModel& s, const json& sec) {
  if (sec.contains("orbit_file")) {
    const fs::path p = c.config_dir / get<std::string>(sec, "orbit_file", "");
    std::ifstream in(p);
    if (!in) throw ConfigError("cannot open orbit file " + p.string());
    json j;
    try {
      in >> j;
      return orbit_from_json(j.contains("orbit") ? j.at("orbit") : j);
    } catch (const json::exception& e) {
      throw ConfigError("orbit file " + p.string() + ": " + e.what());
    }
  }
  const double kappa = config_kappa(c);
  log(c, "searching alpha");
  return find_alpha(s, kappa, seed_family(c.config.value("seeds", json::object()))).orbit;
}

int cmd_geometry_check(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  const json sec = section(c, "geometry_check", {"grid"});
  const int n = get(sec, "grid", 64);
  if (n < 2) throw ConfigError("geometry_check.grid must be at least 2");
  double min_g = INFINITY, sym = 0.0, hodge = 0.0, mean_f = 0.0, fmin = INFINITY, fmax = -INFINITY;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const GeometryEval e = eval_geometry(s, Vec2(static_cast<double>(i) / n, static_cast<double>(j) / n));
      min_g = std::min(min_g, e.g.eigenvalues().real().minCoeff());
      for (int k = 0; k < 2; ++k) sym = std::max(sym, std::abs(e.christoffel[k * 4 + 1] - e.christoffel[k * 4 + 2]));
      hodge = std::max(hodge, std::abs(e.f * std::sqrt(e.g.determinant()) - e.dtheta_density));
      mean_f += e.dtheta_density / (n * n);
      fmin = std::min(fmin, e.f);
      fmax = std::max(fmax, e.f);
    }
  const bool ok = min_g > 0.0 && sym <= 1e-12 && hodge <= 1e-10 && std::abs(mean_f) <= 1e-10;
  write_json(c, "geometry_check.json",
             {{"grid", n},
              {"min_metric_eigenvalue", min_g},
              {"christoffel_asymmetry", sym},
              {"hodge_residual", hodge},
              {"flux_mean", mean_f},
              {"f_min", fmin},
              {"f_max", fmax},
              {"y_only", s.y_only()},
              {"pass", ok}});
  return ok ? 0 : 3;
}

int cmd_flow(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  const json sec = section(c, "flow", {"x", "v", "T", "steps", "every", "project_energy"});
  const PhasePoint z{vec2(sec, "x", Vec2(0.0, 0.0)), vec2(sec, "v", Vec2(1.0, 0.0))};
  const double T = get(sec, "T", 10.0);
  const int steps = get(sec, "steps", 10000);
  const int every = get(sec, "every", 10);
  if (!(T > 0.0) || steps < 1 || every < 1) throw ConfigError("flow: T, steps and every must be positive");
  const auto tr = trajectory(s, z, T, steps, every, get(sec, "project_energy", false));
  std::ostringstream csv;
  write_trajectory_csv(csv, tr);
  write_text(c, "trajectory.csv", csv.str());
  double drift = 0.0;
  for (const auto& p : tr) drift = std::max(drift, std::abs(p.E - tr.front().E) / std::max(1e-300, std::abs(tr.front().E)));
  write_json(c, "flow.json", {{"T", T}, {"steps", steps}, {"energy", tr.front().E}, {"relative_energy_drift", drift},
                              {"end", {tr.back().z.x.x(), tr.back().z.x.y(), tr.back().z.v.x(), tr.back().z.v.y()}}});
  return 0;
}

int cmd_descend(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  const double kappa = config_kappa(c);
  const AlphaResult a = find_alpha(s, kappa, seed_family(c.config.value("seeds", json::object())));
  std::vector<MinimizerEntry> entries = {{a.loop, a.action, a.index, orbit_energy_error(s, a.orbit)}};
  write_json(c, "registry.json", registry_to_json({{kappa, entries}}));
  write_json(c, "alpha_orbit.json", orbit_to_json(a.orbit));
  write_json(c, "alpha_loop.json", loop_to_json(a.loop));
  json outcomes = json::array();
  for (const auto& o : a.outcomes)
    outcomes.push_back({{"seed", o.seed}, {"winding", {o.winding.x(), o.winding.y()}}, {"status", to_string(o.status)},
                        {"action", o.action}});
  write_json(c, "scan.json", outcomes);
  return 0;
}

int cmd_minimax(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  const double kappa = config_kappa(c);
  const json sec = section(c, "minimax", {"n", "loop_N", "u1_nodes", "mountain_pass", "deep_margin"});
  ExperimentOptions eo;
  eo.seeds = seed_family(c.config.value("seeds", json::object()));
  const int N = get(sec, "loop_N", 64);
  const AlphaResult a = find_alpha(s, kappa, eo.seeds);
  const Loop al = polish_critical(s, orbit_to_loop(s, a.orbit, N), kappa).loop;
  DeepLoopOptions dl;
  dl.N = N;
  dl.margin = get(sec, "deep_margin", dl.margin);
  Loop mu = deep_loop(s, kappa, al, dl);
  mu = shift_samples(mu, best_shift(al, mu));
  const LoopPath u1 = linear_path(al, mu, get(sec, "u1_nodes", 16));
  write_json(c, "alpha_loop.json", loop_to_json(al));
  write_json(c, "mu_loop.json", loop_to_json(mu));
  MountainPassOptions mo;
  mo.nodes = 24;
  mo = mp_options(sec.value("mountain_pass", json::object()), mo);
  const auto ns = get<std::vector<int>>(sec, "n", {1});
  std::vector<json> reports(ns.size());
  parallel_for(static_cast<int>(ns.size()), c.workers, [&](int k) {
    const int n = ns[k];
    if (n < 1) throw ConfigError("minimax.n entries must be >= 1");
    const BangertPath bp = build_bangert_path(s, kappa, al, mu, u1, n);
    json j = record_to_json(mountain_pass(s, kappa, bp.path, mo));
    j["bangert"] = {{"max_action", bp.max_action}, {"bound", bp.bound}, {"A", bp.A},
                    {"A_terms", {bp.A_terms[0], bp.A_terms[1], bp.A_terms[2], bp.A_terms[3]}}};
    reports[k] = j;
  });
  for (size_t k = 0; k < ns.size(); ++k) write_json(c, fmt::format("minimax_n{}.json", ns[k]), reports[k]);
  return 0;
}

int cmd_index(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  const json sec = section(c, "index", {"orbit_file", "N", "fine", "n_max"});
  const Orbit o = config_orbit(c, s, sec);
  IndexOptions io;
  io.N = get(sec, "N", io.N);
  io.bott.fine = get(sec, "fine", io.bott.fine);
  io.bott.n_max = get(sec, "n_max", io.bott.n_max);
  io.bott.workers = c.workers;
  const IndexReport r = analyze_orbit(s, o, io);
  json j = index_report_to_json(r);
  bool iteration_ok = true;
  for (const auto& it : r.iteration) iteration_ok = iteration_ok && it.holds();
  j["bott_iteration_pass"] = iteration_ok;
  write_json(c, "index.json", j);
  std::ostringstream csv;
  write_bott_csv(csv, r.bott);
  write_text(c, "bott.csv", csv.str());
  return 0;
}

int cmd_cylinder(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  const json sec = section(c, "cylinder", {"orbit_file", "eps", "steps", "index_N", "with_index"});
  const Orbit o = config_orbit(c, s, sec);
  CylinderOptions co;
  co.eps = get(sec, "eps", co.eps);
  co.steps = get(sec, "steps", co.steps);
  co.index_N = get(sec, "index_N", co.index_N);
  co.with_index = get(sec, "with_index", co.with_index);
  const OrbitCylinder cyl = continue_cylinder(s, o, co);
  std::ostringstream csv;
  write_cylinder_csv(csv, cyl);
  write_text(c, "cylinder.csv", csv.str());
  json samples = json::array();
  for (const auto& p : cyl.samples) samples.push_back(orbit_to_json(p.orbit));
  write_json(c, "cylinder.json",
             {{"kappa_bar", cyl.kappa_bar},
              {"anchor", cyl.anchor},
              {"T_prime", cyl.T_prime},
              {"zeta", {cyl.zeta[0], cyl.zeta[1], cyl.zeta[2], cyl.zeta[3]}},
              {"zeta_richardson", cyl.zeta_richardson},
              {"truncated", cyl.truncated},
              {"bifurcation", cyl.bifurcation},
              {"note", cyl.note},
              {"orbits", samples}});
  return 0;
}

ProbeBudget probe_budget(const json& j) {
  check_keys(j, "mane.budget", {"circle_centers", "radii", "strip_offsets", "max_strip_length", "descents",
                                "descent_iter", "samples_per_unit", "max_samples"});
  ProbeBudget b;
  b.circle_centers = get(j, "circle_centers", b.circle_centers);
  b.radii = get(j, "radii", b.radii);
  b.strip_offsets = get(j, "strip_offsets", b.strip_offsets);
  b.max_strip_length = get(j, "max_strip_length", b.max_strip_length);
  b.descents = get(j, "descents", b.descents);
  b.descent_iter = get(j, "descent_iter", b.descent_iter);
  b.samples_per_unit = get(j, "samples_per_unit", b.samples_per_unit);
  b.max_samples = get(j, "max_samples", b.max_samples);
  return b;
}

ManeBracket run_cu(const Context& c, const SurfaceModel& s, bool both, std::optional<ManeBracket>* c0) {
  const json sec = section(c, "mane", {"window", "tol", "budget"});
  const auto w = get<std::vector<double>>(sec, "window", {0.0, 2.0});
  if (w.size() != 2) throw ConfigError("mane.window: expected [lo, hi]");
  const double tol = get(sec, "tol", 1e-3);
  ProbeBudget b = probe_budget(sec.value("budget", json::object()));
  b.workers = c.workers;
  log(c, "bracketing c_u");
  ManeBracket cu = bracket_cu(s, w[0], w[1], b, tol);
  if (both) {
    log(c, "bracketing c_0");
    *c0 = bracket_c0(s, w[0], w[1], b, tol);
  }
  return cu;
}

int cmd_mane(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  std::optional<ManeBracket> c0;
  const ManeBracket cu = run_cu(c, s, true, &c0);
  bool valid = true;
  for (const auto& w : cu.witnesses) valid = valid && validate_witness(s, w, true);
  for (const auto& w : c0->witnesses) valid = valid && validate_witness(s, w, false);
  write_json(c, "mane.json", {{"c_u", bracket_to_json(cu)}, {"c_0", bracket_to_json(*c0)}, {"witnesses_valid", valid}});
  return valid ? 0 : 3;
}

int cmd_experiment(Context& c) {
  const SurfaceModel s = load_config_surface(c);
  const json sec = section(c, "experiment", {"kappas", "ladder", "certify", "subcritical_margin", "loop_N", "u1_nodes",
                                             "mountain_pass", "ladder_mountain_pass", "barrier_radius"});
  ExperimentOptions eo;
  eo.seeds = seed_family(c.config.value("seeds", json::object()));
  eo.workers = c.workers;
  eo.barrier.seed = c.seed;
  eo.ladder = get(sec, "ladder", eo.ladder);
  eo.loop_N = get(sec, "loop_N", eo.loop_N);
  eo.deep.N = eo.loop_N;
  eo.u1_nodes = get(sec, "u1_nodes", eo.u1_nodes);
  eo.subcritical_margin = get(sec, "subcritical_margin", eo.subcritical_margin);
  eo.barrier_radius = get(sec, "barrier_radius", eo.barrier_radius);
  eo.beta_mp = mp_options(sec.value("mountain_pass", json::object()), eo.beta_mp);
  eo.ladder_mp = mp_options(sec.value("ladder_mountain_pass", json::object()), eo.ladder_mp);
  std::vector<double> kappas = get<std::vector<double>>(sec, "kappas", {});
  if (kappas.empty()) kappas.push_back(config_kappa(c));
  if (get(sec, "certify", false)) {
    const ManeBracket cu = run_cu(c, s, false, nullptr);
    eo.certified_lower = cu.certified_lower;
    write_json(c, "certificate.json", bracket_to_json(cu));
  }
  log(c, fmt::format("running {} energies", kappas.size()));
  const auto runs = run_grid(s, kappas, eo);
  json all = json::array();
  for (const auto& r : runs) all.push_back(run_report_to_json(r));
  write_json(c, "run_report.json", all);
  std::ostringstream csv;
  write_summary_csv(csv, runs);
  write_text(c, "summary.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed magnetic geodesics on the torus: flows, minimax, indices and Mane brackets"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir = "out";
  int workers = default_workers();
  unsigned long long seed = 0;
  bool verbose = false;
  app.add_option("--config", config_path, "scenario config (JSON)")->required();
  app.add_option("--out", out_dir, "artifact directory");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_flag("--verbose", verbose, "progress on stderr");
  app.fallthrough();
  const std::vector<std::pair<std::string, int (*)(Context&)>> commands = {
      {"geometry-check", cmd_geometry_check}, {"flow", cmd_flow},         {"descend", cmd_descend},
      {"minimax", cmd_minimax},               {"index", cmd_index},       {"cylinder", cmd_cylinder},
      {"mane", cmd_mane},                     {"experiment", cmd_experiment}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, "run " + name);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Context c;
  c.out = out_dir;
  c.workers = workers;
  c.verbose = verbose;
  std::string command;
  for (const auto& [name, fn] : commands)
    if (app.got_subcommand(name)) command = name;

  auto fail = [&](int code, const std::string& kind, const std::string& msg) {
    std::cerr << "error: " << msg << "\n";
    try {
      fs::create_directories(c.out);
      std::ofstream f(c.out / "failure.json");
      f << json{{"command", command}, {"kind", kind}, {"message", msg}, {"exit_code", code}}.dump(2) << "\n";
    } catch (...) {
    }
    return code;
  };

  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config " + config_path);
    try {
      in >> c.config;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    check_keys(c.config, "config",
               {"name", "surface", "surface_file", "kappa", "seed", "seeds", "geometry_check", "flow", "minimax", "index",
                "cylinder", "mane", "experiment", "description"});
    c.config_dir = fs::path(config_path).parent_path();
    c.seed = seed_opt->count() ? seed : get<unsigned long long>(c.config, "seed", 1);
    fs::create_directories(c.out);
    fs::remove(c.out / "failure.json");
    int code = 0;
    for (const auto& [name, fn] : commands)
      if (name == command) code = fn(c);
    write_json(c, "manifest.json",
               {{"command", command}, {"scenario", c.config.value("name", "")}, {"seed", c.seed}, {"files", c.files}});
    return code;
  } catch (const ConfigError& e) {
    return fail(2, "config", e.what());
  } catch (const NumericalError& e) {
    return fail(3, e.kind, e.what());
  } catch (const std::exception& e) {
    return fail(3, "internal", e.what());
  }
}
