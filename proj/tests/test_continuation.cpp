#include "doctest.h"

#include <sstream>

#include "maglab/continuation.hpp"
#include "noether.hpp"
#include "support.hpp"

using namespace testsupport;

namespace {
constexpr double kKappa = 0.125;

Orbit noether_orbit(int D, double kappa = kKappa) {
  const noether::Reduced r = noether::orbit_with_drift(1.0, kappa, D);
  const double c = std::sqrt(2 * kappa);
  const Orbit seed = shoot_orbit(shear_field(1.0), {Vec2(0.0, r.ylo), Vec2(c, 0.0)}, r.T * 1.001, kappa, Vec2i(D, 0), 16, 192);
  return refine_orbit(shear_field(1.0), seed, kappa);
}
}  // namespace

TEST_CASE("transverse spectrum and margin") {
  Mat4 M = Mat4::Identity();
  M(2, 2) = 2.0;
  M(3, 3) = 0.5;
  const auto sp = transverse_spectrum(M);
  CHECK(std::abs(sp[0] - 2.0) <= 1e-14);
  CHECK(std::abs(sp[1] - 0.5) <= 1e-14);
  CHECK(nondegeneracy_margin(sp) == doctest::Approx(0.5));
  CHECK(nondegeneracy_margin(Eigen::Matrix2d(Eigen::Vector2d(2.0, 0.5).asDiagonal())) == doctest::Approx(0.5));
  CHECK(nondegeneracy_margin(Eigen::Matrix2d::Identity()) == 0.0);
  const double a = 0.3;
  Eigen::Matrix2d R;
  R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  CHECK(nondegeneracy_margin(R) == doctest::Approx(2 * std::sin(a / 2)).epsilon(1e-12));

  // straight geodesic of the flat torus without field: P is a shear, margin 0
  const double c = std::sqrt(2 * kKappa);
  const Orbit g = shoot_orbit(flat(), {Vec2(0.1, 0.2), Vec2(c, 0.0)}, 1.0 / c, kKappa, Vec2i(1, 0));
  CHECK(nondegeneracy_margin(transverse_spectrum(linearize_flow(flat(), g).M)) <= 1e-6);
}

TEST_CASE("cylinder of the drift-one orbit against the reduced quadrature") {
  const SurfaceModel s = shear_field(1.0);
  const Orbit o = noether_orbit(1);
  CylinderOptions opt;
  opt.eps = 1e-3;
  opt.steps = 2;
  opt.index_N = 96;
  const OrbitCylinder cyl = continue_cylinder(s, o, opt);
  REQUIRE(cyl.samples.size() == 5);
  CHECK_FALSE(cyl.truncated);
  CHECK(cyl.note.find("degenerate") != std::string::npos);
  CHECK(cyl.anchor == 2);
  CHECK(cyl.samples[2].orbit.T == o.T);
  for (const auto& c : cyl.samples) {
    CAPTURE(c.kappa);
    CHECK(orbit_energy_error(s, c.orbit) <= 1e-8);
    CHECK(std::abs(c.orbit.T - noether::orbit_with_drift(1.0, c.kappa, 1).T) <= 1e-7);
    CHECK(c.index == 1);
    CHECK(c.index_T == 1);
  }
  for (size_t k = 1; k < cyl.samples.size(); ++k)
    CHECK(cyl.samples[k].kappa > cyl.samples[k - 1].kappa);

  const double h = 1e-3;
  const double Tp = (noether::orbit_with_drift(1.0, kKappa + h, 1).T - noether::orbit_with_drift(1.0, kKappa - h, 1).T) / (2 * h);
  CHECK(cyl.T_prime == doctest::Approx(Tp).epsilon(1e-4));

  // dS/dkappa = T, by central differences over the sample grid
  for (size_t k = 1; k + 1 < cyl.samples.size(); ++k) {
    const auto &a = cyl.samples[k - 1], &b = cyl.samples[k + 1];
    const double dS = (b.action - a.action) / (b.kappa - a.kappa);
    CHECK(std::abs(dS - cyl.samples[k].orbit.T) <= 1e-5);
  }

  // zeta closes up to the period drift and pairs with X_H to one
  const Monodromy m = linearize_flow(s, o);
  const Vec4 X = hamiltonian_vector(s, o.z0);
  CHECK(cyl.zeta.allFinite());
  CHECK(cyl.zeta_richardson <= 1e-6);
  CHECK((m.M * cyl.zeta - cyl.zeta - cyl.T_prime * X).norm() <= 1e-4 * (1 + cyl.zeta.norm()));
  CHECK(std::abs(omega(X, cyl.zeta)) == doctest::Approx(1.0).epsilon(1e-6));

  std::ostringstream os;
  write_cylinder_csv(os, cyl);
  const std::string csv = os.str();
  CHECK(csv.rfind("kappa,T,S,index,index_T,margin\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
}

TEST_CASE("cylinder of a translation-degenerate orbit is flagged at the anchor") {
  const SurfaceModel s = shear_field(1.0);
  const Orbit o = noether_orbit(0);
  CylinderOptions opt;
  opt.eps = 2e-3;
  opt.steps = 1;
  opt.with_index = false;
  const OrbitCylinder cyl = continue_cylinder(s, o, opt);
  CHECK(cyl.samples.size() == 3);
  CHECK(cyl.note.find("degenerate") != std::string::npos);
  CHECK_FALSE(cyl.bifurcation);
  CHECK(cyl.T_prime > 0.0);
  for (const auto& c : cyl.samples)
    CHECK(std::abs(c.orbit.T - noether::orbit_with_drift(1.0, c.kappa, 0).T) <= 1e-7);
}

TEST_CASE("cylinder options are validated") {
  CylinderOptions opt;
  opt.steps = 0;
  CHECK_THROWS_AS(continue_cylinder(shear_field(1.0), shear_line(1.0, kKappa), opt), ConfigError);
}

TEST_CASE("fixed-energy action of continued iterates grows away from the minimizer") {
  const SurfaceModel s = shear_field(1.0);
  CylinderOptions opt;
  opt.eps = 0.02;
  opt.steps = 4;
  opt.with_index = false;
  const Orbit a = refine_orbit(s, shear_line(1.0, kKappa), kKappa);
  const OrbitCylinder cyl = continue_cylinder(s, a, opt);
  REQUIRE(cyl.samples.size() == 9);
  CHECK(cyl.T_prime < 0.0);
  for (int n : {1, 3}) {
    CAPTURE(n);
    std::vector<double> S;
    for (const auto& c : cyl.samples) S.push_back(action(s, iterate(orbit_to_loop(s, c.orbit, 128), n), kKappa));
    // minimum at the anchor, monotone on each side
    for (int k = cyl.anchor; k + 1 < static_cast<int>(S.size()); ++k) CHECK(S[k + 1] >= S[k]);
    for (int k = cyl.anchor; k > 0; --k) CHECK(S[k - 1] >= S[k]);
  }
}
