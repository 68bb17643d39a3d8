#include "doctest.h"
#include "maglab/errors.hpp"
#include "support.hpp"

using namespace testsupport;

namespace {
LoopTangent random_tangent(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> N(0.0, 1.0);
  LoopTangent t = LoopTangent::zero(n);
  for (auto& v : t.xi) v = Vec2(N(rng), N(rng));
  t.tau = N(rng);
  return t;
}

double pairing(const LoopTangent& a, const LoopTangent& b) {
  double acc = a.tau * b.tau;
  for (size_t j = 0; j < a.xi.size(); ++j) acc += a.xi[j].dot(b.xi[j]);
  return acc;
}

Loop circle(Vec2 c, double r, int N, double T) {
  Loop l;
  l.T = T;
  for (int j = 0; j < N; ++j) l.x.push_back(c + r * Vec2(std::cos(2 * kPi * j / N), std::sin(2 * kPi * j / N)));
  return l;
}
}  // namespace

TEST_CASE("closed-form actions") {
  CHECK(std::abs(action(flat(), constant_loop(Vec2(0.3, 0.3), 2.0, 32), 0.5) - 1.0) < 1e-15);
  Loop line;
  line.T = 1.0;
  line.winding = Vec2i(1, 0);
  for (int j = 0; j < 64; ++j) line.x.push_back(Vec2(j / 64.0, 0.2));
  CHECK(std::abs(action(flat(), line, 0.5) - 1.0) < 1e-14);
}

TEST_CASE("circle action against the Stokes flux") {
  const auto s = random_surface(21, 4, 0.4);
  SurfaceModel flat_s = s;
  flat_s.u = FourierSeries();
  const Vec2 c(0.37, 0.52);
  const double r = 0.1;
  const int N = 4096;
  const double S = action(flat_s, circle(c, r, N, 1.0), 0.0);
  // polar midpoint quadrature of f dA over the disk
  const int nr = 512, na = 512;
  double flux = 0.0;
  for (int i = 0; i < nr; ++i)
    for (int k = 0; k < na; ++k) {
      const double rho = r * (i + 0.5) / nr, phi = 2 * kPi * (k + 0.5) / na;
      flux += eval_geometry(flat_s, c + rho * Vec2(std::cos(phi), std::sin(phi))).dtheta_density * rho;
    }
  flux *= (r / nr) * (2 * kPi / na);
  const double ref = 0.5 * std::pow(2 * kPi * r, 2) + flux;
  CHECK(std::abs(S - ref) < 2e-6);
}

TEST_CASE("differential and gradient against finite differences") {
  std::mt19937_64 rng(5);
  const std::vector<SurfaceModel> surfaces = {random_surface(1), random_surface(2), shear_field(1.0), bump_field(3.0)};
  int checked = 0;
  for (int k = 0; k < 100; ++k) {
    const auto& s = surfaces[k % surfaces.size()];
    const Vec2i w(k % 3 - 1, (k / 3) % 3 - 1);
    Loop l = random_loop(rng, 32 + (k % 4) * 8, w, 0.3 + 0.05 * (k % 30));
    if (k % 5 == 0) {
      std::uniform_real_distribution<double> U(0.5, 1.5);
      double sum = 0.0;
      l.w.resize(l.size());
      for (auto& v : l.w) sum += (v = U(rng));
      for (auto& v : l.w) v /= sum;
    }
    const double kappa = 0.2 + 0.01 * k;
    const LoopTangent t = random_tangent(rng, l.size());
    const double h = 1e-6;
    const double fd = (action(s, apply(l, t, h), kappa) - action(s, apply(l, t, -h), kappa)) / (2 * h);
    const LoopTangent d = action_differential(s, l, kappa);
    const double an = pairing(d, t);
    CHECK(std::abs(an - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    // Riesz property: <grad, t> = dS(t)
    const LoopTangent g = grad_action(s, l, kappa);
    const double riesz = g.tau * t.tau + phi_weight(l.T) * h1_inner(s, l, g.xi, t.xi);
    CHECK(std::abs(riesz - an) <= 1e-9 * std::max(1.0, std::abs(an)));
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("period entry of the gradient at a constant loop is kappa") {
  const auto g = grad_action(random_surface(3), constant_loop(Vec2(0.2, 0.9), 0.7, 32), 0.37);
  CHECK(std::abs(g.tau - 0.37) < 1e-14);
  for (const auto& v : g.xi) CHECK(v.norm() < 1e-12);
}

TEST_CASE("phi weight") {
  CHECK(phi_weight(0.25) == 0.0625);
  CHECK(phi_weight(0.5) == 0.25);
  CHECK(phi_weight(1.0) == 1.0);
  CHECK(phi_weight(3.0) == 1.0);
  double prev = 0.0;
  for (int k = 0; k <= 2000; ++k) {
    const double T = 0.4 + 0.7 * k / 2000;
    CHECK(phi_weight(T) >= prev);
    prev = phi_weight(T);
  }
  // C^2 matching at both ends
  const double h = 1e-5;
  for (double T : {0.5, 1.0}) {
    const double d1m = (phi_weight(T) - phi_weight(T - h)) / h, d1p = (phi_weight(T + h) - phi_weight(T)) / h;
    CHECK(std::abs(d1m - d1p) < 1e-3);
    const double d2m = (phi_weight(T) - 2 * phi_weight(T - h) + phi_weight(T - 2 * h)) / (h * h);
    const double d2p = (phi_weight(T + 2 * h) - 2 * phi_weight(T + h) + phi_weight(T)) / (h * h);
    CHECK(std::abs(d2m - d2p) < 1e-2);
  }
}

TEST_CASE("additivity, iteration and kappa dependence") {
  const auto s = random_surface(4);
  std::mt19937_64 rng(6);
  for (int k = 0; k < 20; ++k) {
    const Loop a = random_loop(rng, 40, Vec2i(1, 0), 0.8);
    Loop b = random_loop(rng, 24, Vec2i(0, 1), 1.3);
    // move b so that it starts at a's base point modulo the lattice
    const Vec2 shift = a.x[0] - b.x[0] + Vec2(2, -1);
    for (auto& p : b.x) p += shift;
    const Curve ab = juxtapose(to_curve(a), to_curve(b));
    const double sum = action(s, a, 0.3) + action(s, b, 0.3);
    CHECK(std::abs(curve_action(s, ab, 0.3) - sum) < 1e-12 * (1 + std::abs(sum)));
    const Loop joined = to_loop(ab);
    CHECK(joined.winding == Vec2i(1, 1));
    CHECK(std::abs(action(s, joined, 0.3) - sum) < 1e-12 * (1 + std::abs(sum)));

    const double S1 = action(s, a, 0.3);
    for (int n : {1, 2, 3}) CHECK(std::abs(action(s, iterate(a, n), 0.3) - n * S1) < 1e-12 * n * (1 + std::abs(S1)));
    CHECK(std::abs(action(s, a, 0.9) - action(s, a, 0.3) - 0.6 * a.T) < 1e-13);

    // elementary lower bound
    for (double kappa : {0.05, 0.5, 2.0})
      CHECK(action(s, a, kappa) >= std::sqrt(2 * kappa) * loop_length(s, a) + theta_integral(s, a) - 1e-12);
  }
  const Loop a = random_loop(rng, 40, Vec2i(1, 0), 0.8);
  const Loop one = iterate(a, 1);
  CHECK(one.x == a.x);
  CHECK(one.T == a.T);
}

TEST_CASE("resampling and reversal") {
  std::mt19937_64 rng(7);
  const Loop a = random_loop(rng, 32, Vec2i(0, 1), 1.1);
  const Loop r = resample_uniform(a, 32);
  for (int j = 0; j < 32; ++j) CHECK((r.x[j] - a.x[j]).norm() < 1e-12);
  const Curve c = to_curve(a);
  const Curve rr = reversed(reversed(c));
  CHECK(rr.x == c.x);
  const auto s = random_surface(2);
  // reversing a curve flips the theta integral only
  const double fwd = curve_action(s, c, 0.4), bwd = curve_action(s, reversed(c), 0.4);
  CHECK(std::abs((fwd - bwd) - 2 * theta_integral(s, a)) < 1e-12);
}

TEST_CASE("free-period Hessian against finite differences of the differential") {
  std::mt19937_64 rng(8);
  const auto s = random_surface(9);
  Loop l = random_loop(rng, 20, Vec2i(1, -1), 0.9);
  const double kappa = 0.4;
  const Eigen::MatrixXd H = free_period_hessian(s, l, kappa);
  const int n = l.size();
  auto flat_d = [&](const Loop& q) {
    const auto d = action_differential(s, q, kappa);
    Eigen::VectorXd v(2 * n + 1);
    for (int j = 0; j < n; ++j) v.segment<2>(2 * j) = d.xi[j];
    v[2 * n] = d.tau;
    return v;
  };
  const double h = 1e-6;
  for (int c = 0; c < 2 * n + 1; ++c) {
    LoopTangent e = LoopTangent::zero(n);
    if (c < 2 * n)
      e.xi[c / 2][c % 2] = 1.0;
    else
      e.tau = 1.0;
    const Eigen::VectorXd col = (flat_d(apply(l, e, h)) - flat_d(apply(l, e, -h))) / (2 * h);
    CHECK((col - H.col(c)).cwiseAbs().maxCoeff() < 1e-5 * (1 + H.col(c).cwiseAbs().maxCoeff()));
  }
  CHECK((H - H.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("twisted Hessian: flat geodesic has index zero") {
  Loop line;
  line.T = 1.0;
  line.winding = Vec2i(1, 0);
  for (int j = 0; j < 64; ++j) line.x.push_back(Vec2(j / 64.0, 0.2));
  for (double a : {0.0, 0.3, 1.0, 2.0, kPi}) {
    const auto c = twisted_hessian_index(flat(), line, 0.5, std::polar(1.0, a));
    CHECK(c.negative == 0);
  }
}

TEST_CASE("Bloch identity: iterate Hessian splits over roots of unity") {
  std::mt19937_64 rng(10);
  const auto s = bump_field(4.0);
  for (int trial = 0; trial < 3; ++trial) {
    const Loop l = random_loop(rng, 24, Vec2i(1, 0), 0.6 + 0.3 * trial);
    for (int n : {2, 3, 4}) {
      int sum = 0;
      for (int k = 0; k < n; ++k) sum += twisted_hessian_index(s, l, 0.3, std::polar(1.0, 2 * kPi * k / n)).negative;
      const auto direct = twisted_hessian_index(s, iterate(l, n), 0.3, 1.0);
      CHECK(direct.marginal == 0);
      CHECK(direct.negative == sum);
    }
  }
}

TEST_CASE("banded twisted form at z = 1 agrees with the dense Hessian") {
  std::mt19937_64 rng(11);
  const auto s = random_surface(12);
  for (int N : {17, 24}) {
    const Loop l = random_loop(rng, N, Vec2i(0, 1), 0.7);
    const Eigen::MatrixXd H = free_period_hessian(s, l, 0.3).topLeftCorner(2 * N, 2 * N);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const auto band = twisted_hessian_index(s, l, 0.3, 1.0);
    CHECK((band.spectrum - es.eigenvalues()).cwiseAbs().maxCoeff() < 1e-9 * es.eigenvalues().cwiseAbs().maxCoeff());
  }
}

TEST_CASE("polished straight orbit of the shear field") {
  const auto s = shear_field(1.0);
  const double kappa = 0.125;
  const Orbit o = shear_line(1.0, kappa);
  Loop l = orbit_to_loop(s, o, 64);
  // perturb then polish back
  for (int j = 0; j < l.size(); ++j) l.x[j].y() += 1e-3 * std::sin(2 * kPi * j / l.size());
  l.T *= 1.01;
  const auto p = polish_critical(s, l, kappa);
  CHECK(p.converged);
  CHECK(p.grad_norm <= 1e-10);
  CHECK(std::abs(action(s, p.loop, kappa) - (-0.5)) < 1e-9);
  CHECK(std::abs(p.loop.T - 2.0) < 1e-9);
  const auto iT = fixed_period_index(s, p.loop, kappa);
  const auto i = free_period_hessian_index(s, p.loop, kappa);
  CHECK(iT.negative == 0);
  CHECK(i.negative == 0);
  CHECK(twisted_hessian_index(s, p.loop, kappa, 1.0).negative == iT.negative);
  CHECK(twisted_hessian_index(s, iterate(p.loop, 2), kappa, 1.0).negative == 0);
}

TEST_CASE("loop JSON") {
  std::mt19937_64 rng(12);
  Loop l = random_loop(rng, 20, Vec2i(2, -1), 1.7);
  const Loop back = loop_from_json(loop_to_json(l));
  CHECK(back.x == l.x);
  CHECK(back.T == l.T);
  CHECK(back.winding == l.winding);
  nlohmann::json bad = loop_to_json(l);
  bad["T"] = -1.0;
  CHECK_THROWS_AS(loop_from_json(bad), ConfigError);
  bad = loop_to_json(l);
  bad["samples"].erase(0);
  CHECK_THROWS_AS(loop_from_json(bad), ConfigError);
}
