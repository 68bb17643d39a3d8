#pragma once

// Closed orbits of theta = A sin(2 pi y) dx on the flat torus by the Noether reduction:
// p = v_x + theta_x(y) is conserved, so y oscillates between the turning points
// theta_x = p -+ c (c = sqrt(2 kappa)) in the band |y| < 1/4 and x drifts by D per period.

#include <cmath>
#include <numbers>

namespace noether {

struct Reduced {
  double p = 0, ylo = 0, yhi = 0, T = 0, drift = 0, S = 0;
};

inline Reduced integrals(double A, double kappa, double p, int n = 40000) {
  const double pi = std::numbers::pi;
  const double c = std::sqrt(2 * kappa);
  Reduced r;
  r.p = p;
  r.ylo = std::asin(std::clamp((p - c) / A, -1.0, 1.0)) / (2 * pi);
  r.yhi = std::asin(std::clamp((p + c) / A, -1.0, 1.0)) / (2 * pi);
  // y = ylo + (yhi - ylo)(1 - cos phi)/2 removes the turning-point singularities; the
  // integrand is smooth and even in phi, so the midpoint rule converges spectrally.
  const double L = r.yhi - r.ylo;
  for (int k = 0; k < n; ++k) {
    const double phi = pi * (k + 0.5) / n;
    const double y = r.ylo + L * (1 - std::cos(phi)) / 2;
    const double th = A * std::sin(2 * pi * y);
    const double vx = p - th;
    const double vy = std::sqrt(std::max(c * c - vx * vx, 1e-300));
    const double w = 2 * (pi / n) * L * std::sin(phi) / 2 / vy;
    r.T += w;
    r.drift += w * vx;
    r.S += w * (c * c + th * vx);
  }
  return r;
}

// Orbit with x-drift D per period (D = 0 is the contractible orbit), by bisection on p.
inline Reduced orbit_with_drift(double A, double kappa, double D) {
  const double c = std::sqrt(2 * kappa);
  double lo = c - A + 1e-15, hi = A - c - 1e-15;
  const bool increasing = integrals(A, kappa, hi, 2000).drift > integrals(A, kappa, lo, 2000).drift;
  for (int it = 0; it < 80 && hi - lo > 1e-17; ++it) {
    const double mid = 0.5 * (lo + hi);
    const bool above = integrals(A, kappa, mid, 60000).drift > D;
    if (above == increasing)
      hi = mid;
    else
      lo = mid;
  }
  return integrals(A, kappa, 0.5 * (lo + hi), 60000);
}

}  // namespace noether
