#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "maglab/action.hpp"
#include "maglab/dynamics.hpp"
#include "maglab/errors.hpp"
#include "maglab/geometry.hpp"
#include "maglab/minimax.hpp"

namespace testsupport {

using namespace maglab;
constexpr double kPi = std::numbers::pi;

inline SurfaceModel flat() { return SurfaceModel{}; }

// theta = A sin(2 pi y) dx on the flat torus
inline SurfaceModel shear_field(double A = 1.0) {
  SurfaceModel s;
  s.theta_x = FourierSeries({{0, 1, 0.0, A}});
  return s;
}

// f = B (cos 2 pi x + cos 2 pi y)
inline SurfaceModel bump_field(double B) {
  SurfaceModel s;
  s.theta_x = FourierSeries({{0, 1, 0.0, -B / (2 * kPi)}});
  s.theta_y = FourierSeries({{1, 0, 0.0, B / (2 * kPi)}});
  return s;
}

// bump_field(B) plus e B sin(4 pi x) in f, which breaks the half-turn symmetry about the maximum
inline SurfaceModel tilted_bump(double B, double e) {
  SurfaceModel s = bump_field(B);
  s.theta_y = FourierSeries({{1, 0, 0.0, B / (2 * kPi)}, {2, 0, -e * B / (4 * kPi), 0.0}});
  return s;
}

inline SurfaceModel random_surface(unsigned seed, int modes = 3, double amp = 0.15) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-amp, amp);
  std::uniform_int_distribution<int> M(-2, 2);
  std::vector<FourierTerm> u, tx, ty;
  for (int k = 0; k < modes; ++k) {
    u.push_back({M(rng), M(rng), U(rng), U(rng)});
    tx.push_back({M(rng), M(rng), U(rng), U(rng)});
    ty.push_back({M(rng), M(rng), U(rng), U(rng)});
  }
  SurfaceModel s;
  s.u = FourierSeries(u);
  s.theta_x = FourierSeries(tx);
  s.theta_y = FourierSeries(ty);
  return s;
}

// Multiple-shooting nodes of the trajectory through z0 (no refinement).
inline Orbit shoot_orbit(const SurfaceModel& s, const PhasePoint& z0, double T, double kappa, Vec2i winding,
                         int segments = 16, int steps = 64) {
  Orbit o;
  o.z0 = z0;
  o.T = T;
  o.kappa = kappa;
  o.winding = winding;
  o.steps_per_segment = steps;
  PhasePoint z = z0;
  for (int k = 0; k < segments; ++k) {
    o.nodes.push_back(z);
    z = rk4(s, z, T / segments, steps);
  }
  o.residual = orbit_defect(s, o);
  return o;
}

// The straight orbit y = 3/4 of shear_field(A), speed sqrt(2 kappa), moving +x.
inline Orbit shear_line(double A, double kappa, int segments = 16, int steps = 64) {
  const double c = std::sqrt(2 * kappa);
  return shoot_orbit(shear_field(A), {Vec2(0.0, 0.75), Vec2(c, 0.0)}, 1.0 / c, kappa, Vec2i(1, 0), segments, steps);
}

// Small Larmor circle around a local maximum c of f, refined.
inline Orbit larmor_circle(const SurfaceModel& s, const Vec2& c, double kappa, int segments = 16) {
  const double f = eval_geometry(s, c).f;
  const double sp = std::sqrt(2 * kappa);
  const Orbit seed = shoot_orbit(s, {c + Vec2(0.0, sp / f), Vec2(sp, 0.0)}, 2 * kPi / f, kappa, Vec2i(0, 0), segments);
  RefineOptions ro;
  ro.steps_per_segment = seed.steps_per_segment;
  return refine_orbit(s, seed, kappa, ro);
}

inline Loop random_loop(std::mt19937_64& rng, int N, Vec2i winding, double T) {
  std::normal_distribution<double> nd(0.0, 0.05);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Loop l;
  l.T = T;
  l.winding = winding;
  const Vec2 base(U(rng), U(rng));
  const double a = nd(rng) * 2, b = nd(rng) * 2;
  for (int j = 0; j < N; ++j) {
    const double s = static_cast<double>(j) / N;
    const Vec2 wob(a * std::sin(2 * kPi * s) + 0.1 * std::cos(2 * kPi * s), b * std::cos(4 * kPi * s) +
                                                                                 0.1 * std::sin(2 * kPi * s));
    l.x.push_back(base + s * winding.cast<double>() + wob + Vec2(nd(rng), nd(rng)) * 0.1);
  }
  return l;
}

// Central differences of the time-t flow, Richardson-extrapolated from steps h and h/2.
inline Mat4 fd_flow_jacobian(const SurfaceModel& s, const PhasePoint& z0, double t, int steps, double h = 1e-6) {
  auto central = [&](int c, double step) {
    Vec4 e = Vec4::Zero();
    e[c] = step;
    return Vec4((pack(rk4(s, unpack(pack(z0) + e), t, steps)) - pack(rk4(s, unpack(pack(z0) - e), t, steps))) /
                (2 * step));
  };
  Mat4 J;
  for (int c = 0; c < 4; ++c) J.col(c) = (4.0 * central(c, h / 2) - central(c, h)) / 3.0;
  return J;
}

// max_ij |A_ij - B_ij| / max(1, |B_ij|)
inline double entrywise_rel(const Mat4& A, const Mat4& B) {
  return ((A - B).cwiseAbs().array() / B.cwiseAbs().array().max(1.0)).maxCoeff();
}

}  // namespace testsupport
