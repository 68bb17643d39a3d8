#include "doctest.h"
#include "maglab/localmin.hpp"
#include "maglab/minimax.hpp"
#include "support.hpp"

using namespace testsupport;

namespace {
// Horizontal closed orbits of a y-only surface are the critical points of the reduced
// function F(y) = c e^{u(y)} + theta_x(y) (action of the line at height y moving +x).
struct LineOracle {
  double y, T, S;
};

LineOracle line_minimizer(const SurfaceModel& s, double kappa, double lo, double hi) {
  const double c = std::sqrt(2 * kappa);
  auto F = [&](double y) {
    const auto g = eval_geometry(s, Vec2(0, y));
    return c * std::sqrt(g.conformal) + g.theta.x();
  };
  const double r = (std::sqrt(5.0) - 1) / 2;
  double a = lo, b = hi;
  for (int it = 0; it < 200; ++it) {
    const double x1 = b - r * (b - a), x2 = a + r * (b - a);
    if (F(x1) < F(x2))
      b = x2;
    else
      a = x1;
  }
  const double y = 0.5 * (a + b);
  const double e = std::sqrt(eval_geometry(s, Vec2(0, y)).conformal);
  return {y, e / c, F(y)};
}

Loop polished_alpha(const SurfaceModel& s, double kappa, int N) {
  const double c = std::sqrt(2 * kappa);
  const Orbit o = shoot_orbit(s, {Vec2(0.0, 0.75), Vec2(c, 0.0)}, 1.0 / c, kappa, Vec2i(1, 0));
  return polish_critical(s, orbit_to_loop(s, o, N), kappa).loop;
}

// Smallest eigenvalue of the Hessian relative to the metric, normal to the time-shift direction.
double lambda_min(const SurfaceModel& s, const Loop& l, double kappa) {
  const int n = l.size();
  const Eigen::MatrixXd H = free_period_hessian(s, l, kappa);
  const Eigen::MatrixXd G = metric_matrix(s, l);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(2 * n + 1);
  for (int j = 0; j < n; ++j) {
    const Vec2 prev = j == 0 ? l.x[n - 1] - l.winding.cast<double>() : l.x[j - 1];
    d.segment<2>(2 * j) = 0.5 * (l.node(j + 1) - prev);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr((G * d).eval());
  const Eigen::MatrixXd Q = Eigen::MatrixXd(qr.householderQ()).rightCols(2 * n);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(Q.transpose() * H * Q, Q.transpose() * G * Q);
  return es.eigenvalues()[0];
}
}  // namespace

TEST_CASE("smooth_project: fixed point, monotonicity and flat segments") {
  const auto s = shear_field(1.0);
  const Loop a = polished_alpha(s, 0.125, 64);
  const Loop p = smooth_project(s, a, 0.125, 8);
  for (int j = 0; j < a.size(); ++j) CHECK((p.x[j] - a.x[j]).norm() < 1e-8);

  std::mt19937_64 rng(3);
  const auto r = random_surface(4);
  for (int k = 0; k < 20; ++k) {
    const Loop l = random_loop(rng, 64, Vec2i(k % 2, 0), 0.8);
    for (int h : {8, 16, 32}) {
      try {
        const Loop q = smooth_project(r, l, 0.3, h);
        CHECK(action(r, q, 0.3) <= action(r, l, 0.3) + 1e-12);
      } catch (const NumericalError& e) {
        CHECK(e.kind == "h-too-small");
      }
    }
  }

  Loop saw;
  saw.T = 1.0;
  saw.winding = Vec2i(1, 0);
  const int N = 64;
  for (int j = 0; j < N; ++j) saw.x.push_back(Vec2(j / 64.0, 0.3 + ((j % 2) ? 0.01 : -0.01) * (j % 8 != 0)));
  const Loop q = smooth_project(flat(), saw, 0.5, 8);
  for (int k = 0; k < 8; ++k) {
    const Vec2 A = saw.node(8 * k), B = saw.node(8 * k + 8);
    for (int i = 0; i <= 8; ++i) CHECK((q.node(8 * k + i) - (A + (B - A) * (i / 8.0))).norm() < 1e-12);
  }
}

TEST_CASE("descend: collapse of a tiny contractible circle") {
  const auto s = shear_field(1.0);
  Loop l;
  for (int j = 0; j < 64; ++j) l.x.push_back(Vec2(0.3, 0.3) + 0.01 * Vec2(std::cos(2 * kPi * j / 64), std::sin(2 * kPi * j / 64)));
  l.T = 0.1;
  const auto d = descend(s, l, 2.0, {});
  CHECK(d.status == DescentStatus::CollapsedToPoint);
  CHECK(std::abs(d.action) < 1e-4);
  CHECK(d.loop.T < 1e-3);
  for (size_t k = 1; k < d.trace.size(); ++k) CHECK(d.trace[k] <= d.trace[k - 1]);
}

TEST_CASE("descend: seed near an orbit returns to it") {
  const auto s = shear_field(1.0);
  const Loop a = polished_alpha(s, 0.125, 64);
  Loop seed = a;
  for (int j = 0; j < seed.size(); ++j) seed.x[j] += Vec2(0.0, 0.02 * std::sin(4 * kPi * j / seed.size()));
  seed.T *= 1.05;
  const auto d = descend(s, seed, 0.125, {});
  CHECK(d.status == DescentStatus::Minimizer);
  CHECK(aligned_distance(a, d.loop) < 1e-6);
  CHECK(free_period_hessian_index(s, d.loop, 0.125).negative == 0);
  for (size_t k = 1; k < d.trace.size(); ++k) CHECK(d.trace[k] <= d.trace[k - 1] + 1e-15);
}

TEST_CASE("descend: integrable scenario against the reduced oracle") {
  SurfaceModel s = shear_field(1.0);
  s.u = FourierSeries({{0, 1, 0.1, 0.0}});
  const double kappa = 0.125;
  const LineOracle o = line_minimizer(s, kappa, 0.5, 1.0);
  Loop seed;
  seed.winding = Vec2i(1, 0);
  seed.T = 2.0;
  for (int j = 0; j < 128; ++j) seed.x.push_back(Vec2(j / 128.0, 0.7));
  const auto d = descend(s, seed, kappa, {});
  REQUIRE(d.status == DescentStatus::Minimizer);
  const Orbit orb = refine_orbit(s, d.loop, kappa);
  CHECK(std::abs(orb.T - o.T) < 1e-5);
  CHECK(std::abs(orbit_action(s, orb) - o.S) < 1e-5);
  CHECK(std::abs(d.loop.T - o.T) < 1e-5);
  CHECK(std::abs(d.action - o.S) < 1e-5);
}

TEST_CASE("find_alpha on the shear field") {
  const auto s = shear_field(1.0);
  const double kappa = 0.125;
  const AlphaResult a = find_alpha(s, kappa);
  CHECK(a.action < 0.0);
  CHECK(std::abs(a.action - (-0.5)) < 1e-8);
  CHECK(orbit_energy_error(s, a.orbit) <= 1e-8);
  CHECK(a.orbit.residual <= 1e-10);
  CHECK(metric_norm(s, a.loop, grad_action(s, a.loop, kappa)) <= 1e-6);
  CHECK(a.index == 0);
  CHECK(a.index_T == 0);
  CHECK(a.outcomes.size() == 740);
}

TEST_CASE("find_alpha reports failure above the critical value") {
  SeedFamily fam;
  fam.radii = 2;
  fam.centers_per_side = 1;
  fam.windings = {};
  CHECK_THROWS_AS(find_alpha(shear_field(1.0), 2.0, fam), NumericalError);
}

TEST_CASE("iterates of the minimizer persist") {
  const auto s = shear_field(1.0);
  const Loop a = polished_alpha(s, 0.125, 48);
  const Loop a2 = iterate(a, 2);
  CHECK(std::abs(action(s, iterate(a, 3), 0.125) - 3 * action(s, a, 0.125)) < 1e-12);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> N(0.0, 1e-3);
  Loop seed = a2;
  for (auto& p : seed.x) p += Vec2(N(rng), N(rng));
  seed.T += N(rng);
  const auto d = descend(s, seed, 0.125, {});
  CHECK(d.status == DescentStatus::Minimizer);
  CHECK(std::abs(d.action - 2 * action(s, a, 0.125)) < 1e-8);
  CHECK(aligned_distance(a2, d.loop) < 1e-5);
}

TEST_CASE("strictness barrier against the quadratic model") {
  const auto s = shear_field(1.0);
  const double kappa = 0.125;
  const Loop a = polished_alpha(s, kappa, 48);
  const double lam = lambda_min(s, a, kappa);
  REQUIRE(lam > 0.0);
  const double r = 1e-3;
  const double b = strictness_barrier(s, a, kappa, r);
  CHECK(b > 0.0);
  CHECK(std::abs(b - 0.5 * lam * r * r) < 0.05 * 0.5 * lam * r * r);
  CHECK(strictness_barrier(s, a, kappa, 1e-5) < b * 1e-3);
  CHECK(strictness_barrier(s, iterate(a, 2), kappa, r) > 0.0);
}

TEST_CASE("registry JSON") {
  const auto s = shear_field(1.0);
  const Loop a = polished_alpha(s, 0.125, 32);
  const auto j = registry_to_json({{0.125, {{a, -0.5, 0, 1e-12}}}});
  CHECK(j["minimizers"][0]["kappa"] == 0.125);
  CHECK(loop_from_json(j["minimizers"][0]["orbits"][0]["loop"]).x == a.x);
}
