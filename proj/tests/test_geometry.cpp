#include <sstream>

#include "doctest.h"
#include "maglab/errors.hpp"
#include "support.hpp"

using namespace testsupport;

TEST_CASE("flat zero-field surface") {
  const auto g = eval_geometry(flat(), Vec2(0.3, 0.7));
  CHECK((g.g - Mat2::Identity()).norm() == 0.0);
  for (double c : g.christoffel) CHECK(c == 0.0);
  CHECK(g.f == 0.0);
}

TEST_CASE("f of A sin(2 pi y) dx against finite differences") {
  const auto s = shear_field(1.3);
  const Vec2 p(0.0, 0.25);
  const double h = 1e-5;
  auto th = [&](const Vec2& q) { return eval_geometry(s, q).theta; };
  const double dtx_dy = (th(p + Vec2(0, h)).x() - th(p - Vec2(0, h)).x()) / (2 * h);
  const double dty_dx = (th(p + Vec2(h, 0)).y() - th(p - Vec2(h, 0)).y()) / (2 * h);
  const double fd = dty_dx - dtx_dy;  // flat metric: area density 1
  const auto g = eval_geometry(s, p);
  CHECK(std::abs(g.f - fd) < 1e-6);
  CHECK(std::abs(g.f - (-2 * kPi * 1.3 * std::cos(2 * kPi * 0.25))) < 1e-12);
}

TEST_CASE("f matches finite-difference star d theta on random points") {
  const auto s = random_surface(7);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double h = 1e-5;
  for (int k = 0; k < 100; ++k) {
    const Vec2 p(U(rng), U(rng));
    auto th = [&](const Vec2& q) { return eval_geometry(s, q).theta; };
    const double dens = (th(p + Vec2(h, 0)).y() - th(p - Vec2(h, 0)).y()) / (2 * h) -
                        (th(p + Vec2(0, h)).x() - th(p - Vec2(0, h)).x()) / (2 * h);
    const auto g = eval_geometry(s, p);
    CHECK(std::abs(g.dtheta_density - dens) < 1e-6);
    CHECK(std::abs(g.f * std::sqrt(g.g.determinant()) - g.dtheta_density) < 1e-12);
  }
}

TEST_CASE("f dA has zero mean") {
  for (unsigned seed : {1u, 2u, 3u}) {
    const auto s = random_surface(seed, 5, 0.3);
    const int n = 256;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) acc += eval_geometry(s, Vec2((i + 0.5) / n, (j + 0.5) / n)).dtheta_density;
    CHECK(std::abs(acc / (n * n)) < 1e-10);
  }
}

TEST_CASE("Christoffel symbols against finite differences of the metric") {
  const auto s = random_surface(11);
  const Vec2 p(0.21, 0.64);
  const double h = 1e-5;
  const auto g0 = eval_geometry(s, p);
  Mat2 ginv = g0.g.inverse();
  std::array<Mat2, 2> dg;
  for (int k = 0; k < 2; ++k) {
    Vec2 e = Vec2::Zero();
    e[k] = h;
    dg[k] = (eval_geometry(s, p + e).g - eval_geometry(s, p - e).g) / (2 * h);
  }
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        double ref = 0.0;
        for (int l = 0; l < 2; ++l) ref += 0.5 * ginv(k, l) * (dg[j](l, i) + dg[i](l, j) - dg[l](i, j));
        CHECK(std::abs(g0.christoffel[k * 4 + i * 2 + j] - ref) < 1e-7);
        CHECK(g0.christoffel[k * 4 + i * 2 + j] == g0.christoffel[k * 4 + j * 2 + i]);
      }
}

TEST_CASE("rotate90 is a complex structure") {
  CHECK((rotate90(flat(), Vec2(0, 0), Vec2(1, 0)) - Vec2(0, 1)).norm() == 0.0);
  const auto s = random_surface(5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Vec2 p(N(rng), N(rng)), v(N(rng), N(rng));
    const Vec2 iv = rotate90(s, p, v);
    const double vv = metric_dot(s, p, v, v);
    CHECK(std::abs(metric_dot(s, p, iv, iv) - vv) <= 1e-12 * v.squaredNorm() * (1 + vv));
    CHECK(std::abs(metric_dot(s, p, iv, v)) <= 1e-12 * v.squaredNorm() * (1 + vv));
    CHECK((rotate90(s, p, iv) + v).norm() <= 1e-12 * v.norm());
    // positive orientation: det(v, iv) > 0
    CHECK(v.x() * iv.y() - v.y() * iv.x() > 0.0);
  }
}

TEST_CASE("surface JSON round trip and validation") {
  const auto s = random_surface(9);
  const auto back = surface_from_json(surface_to_json(s));
  const Vec2 p(0.4, 0.1);
  CHECK(eval_geometry(back, p).f == eval_geometry(s, p).f);
  nlohmann::json bad = {{"K", 1}, {"fourier_u", {{3, 0, 0.1, 0.0}}}};
  CHECK_THROWS_AS(surface_from_json(bad), ConfigError);
  nlohmann::json bad2 = {{"fourier_theta_x", {{0, 1, 0.1}}}};
  CHECK_THROWS_AS(surface_from_json(bad2), ConfigError);
}
