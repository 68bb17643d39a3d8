#include "doctest.h"

#include <sstream>

#include "maglab/experiment.hpp"
#include "noether.hpp"
#include "support.hpp"

using namespace testsupport;

namespace {
constexpr double kKappa = 0.125;

OrbitRecord bare(const SurfaceModel& s, const std::string& label, const Orbit& o) {
  OrbitRecord r;
  r.label = label;
  r.orbit = o;
  r.action = orbit_action(s, o);
  return r;
}

Orbit line_orbit(double x0, int turns) {
  const SurfaceModel s = shear_field(1.0);
  const double c = std::sqrt(2 * kKappa);
  const Orbit seed = shoot_orbit(s, {Vec2(x0, 0.75), Vec2(c, 0.0)}, turns / c, kKappa, Vec2i(turns, 0), 16 * turns);
  return refine_orbit(s, seed, kKappa);
}

ExperimentOptions quick() {
  ExperimentOptions o;
  o.seeds.radii = 2;
  o.seeds.centers_per_side = 1;
  o.seeds.windings = {Vec2i(1, 0)};
  o.seeds.period_factors = {1.0};
  o.ladder = {1, 2};
  return o;
}
}  // namespace

TEST_CASE("geometric distinctness up to shift and iteration") {
  const SurfaceModel s = shear_field(1.0);
  const OrbitRecord a = bare(s, "a", line_orbit(0.0, 1));
  const OrbitRecord shifted = bare(s, "shifted", line_orbit(0.37, 1));
  const OrbitRecord twice = bare(s, "twice", line_orbit(0.1, 2));

  const Distinctness d1 = compare_orbits(s, a, shifted);
  CHECK_FALSE(d1.distinct);
  CHECK(d1.k == 1);
  CHECK(d1.distance < 1e-5);
  const Distinctness d2 = compare_orbits(s, twice, a);
  CHECK_FALSE(d2.distinct);
  CHECK(d2.k == -2);
  CHECK(compare_orbits(s, a, twice).k == 2);
  CHECK(compare_orbits(s, a, twice, 1).distinct);

  // the orbit with drift 1 has another period
  const noether::Reduced r = noether::orbit_with_drift(1.0, kKappa, 1.0);
  const double c = std::sqrt(2 * kKappa);
  const Orbit drift = refine_orbit(
      s, shoot_orbit(s, {Vec2(0.0, r.ylo), Vec2(c, 0.0)}, r.T * 1.001, kKappa, Vec2i(1, 0), 16, 192), kKappa);
  const Distinctness d3 = compare_orbits(s, a, bare(s, "drift", drift));
  CHECK(d3.distinct);
  CHECK(d3.distance == -1.0);

  // same period and winding, displaced in y: compared, and distinct
  const Orbit low = refine_orbit(s, shoot_orbit(s, {Vec2(0.0, 0.25), Vec2(-c, 0.0)}, 1 / c, kKappa, Vec2i(-1, 0)), kKappa);
  CHECK(compare_orbits(s, a, bare(s, "low", low)).distinct);
}

TEST_CASE("revalidation reads the serialized orbit") {
  const SurfaceModel s = shear_field(1.0);
  OrbitRecord a = bare(s, "a", line_orbit(0.0, 1));
  const Revalidation v = revalidate(s, a);
  CHECK(v.ok);
  CHECK(v.residual <= 1e-10);
  CHECK(v.energy_error <= 1e-8);
  CHECK(v.action_diff <= 1e-10);
  a.action += 1e-6;
  CHECK_FALSE(revalidate(s, a).ok);
  a.action -= 1e-6;
  a.orbit.kappa *= 1.01;
  CHECK_FALSE(revalidate(s, a).ok);
}

TEST_CASE("three orbits on the reference scenario") {
  const SurfaceModel s = shear_field(1.0);
  ExperimentOptions opt = quick();
  opt.workers = 2;
  const RunReport r = three_orbit_run(s, kKappa, opt);
  CHECK(r.errors.empty());
  REQUIRE(r.alpha);
  REQUIRE(r.beta);
  REQUIRE(r.gamma);
  CHECK(r.alpha->action < 0.0);
  CHECK(r.alpha->i == 0);
  CHECK(r.alpha_barrier > 0.0);
  CHECK(r.beta->action < 0.0);
  CHECK(r.beta->i == 1);
  CHECK(r.beta->action > r.alpha->action);
  CHECK(r.gamma->action > 0.0);
  CHECK(r.gamma->orbit.winding == Vec2i::Zero());
  CHECK(r.pairs.size() == 3);
  for (const auto& p : r.pairs) CHECK(p.distinct);
  CHECK(r.all_revalidated);
  for (const auto* o : {&*r.alpha, &*r.beta, &*r.gamma}) {
    CHECK(o->i - o->i_T >= 0);
    CHECK(o->i - o->i_T <= 1);
    if (o->theorem_checked) CHECK(o->mean_index > 0.01);
  }

  REQUIRE(r.ladder);
  const InfinitudeReport& L = *r.ladder;
  REQUIRE(L.entries.size() == 2);
  CHECK(L.q_decreasing);
  CHECK(L.entries[0].q < 0.0);
  for (const auto& e : L.entries) {
    CHECK(e.q <= e.bangert_max + 1e-12);
    CHECK(e.bangert_max <= e.bangert_bound + 1e-12);
  }
  CHECK(L.mean_positive);
  CHECK(L.iterate_scaling);
  CHECK(L.no_zero_mean_root);

  const auto j = run_report_to_json(r);
  CHECK(j["alpha"]["i"] == 0);
  CHECK(j["ladder"]["entries"].size() == 2);
  CHECK(j["pairs"].size() == 3);
  std::ostringstream csv;
  write_summary_csv(csv, {r});
  const std::string out = csv.str();
  CHECK(out.rfind("kappa,orbits,", 0) == 0);
  CHECK(std::count(out.begin(), out.end(), '\n') == 2);
  CHECK(out.find(",3,") != std::string::npos);
}

TEST_CASE("failed stages are reported, not fabricated") {
  ExperimentOptions opt = quick();
  opt.seeds.windings = {};
  const RunReport r = three_orbit_run(flat(), 0.1, opt);
  CHECK_FALSE(r.alpha);
  CHECK_FALSE(r.beta);
  CHECK_FALSE(r.gamma);
  CHECK_FALSE(r.ladder);
  REQUIRE(r.errors.size() >= 2);
  CHECK(r.errors[0].rfind("alpha/mu", 0) == 0);
  CHECK(r.errors.back().rfind("gamma", 0) == 0);
}

TEST_CASE("experiment preconditions") {
  const SurfaceModel s = shear_field(1.0);
  ExperimentOptions opt = quick();
  opt.certified_lower = 0.1;
  CHECK_THROWS_AS(three_orbit_run(s, kKappa, opt), ConfigError);
  CHECK_THROWS_AS(infinitude_probe(s, kKappa, {0, 2}, quick()), ConfigError);
  CHECK_THROWS_AS(three_orbit_run(s, -1.0, quick()), ConfigError);
}
