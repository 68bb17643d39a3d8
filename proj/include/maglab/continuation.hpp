#pragma once

#include <array>
#include <complex>
#include <ostream>
#include <string>
#include <vector>

#include "maglab/dynamics.hpp"
#include "maglab/minimax.hpp"

namespace maglab {

struct CylinderSample {
  double kappa = 0.0;
  Orbit orbit;
  double action = 0.0;
  int index = -1;    // free-period index, -1 when not computed
  int index_T = -1;
  double margin = 0.0;  // transversal non-degeneracy margin
};

struct OrbitCylinder {
  std::vector<CylinderSample> samples;  // increasing kappa
  int anchor = 0;                       // position of the input orbit in samples
  double kappa_bar = 0.0;
  double T_prime = 0.0;   // central difference of the period curve at kappa_bar (five points when available)
  Vec4 zeta = Vec4::Zero();  // -d/dkappa of the Legendre image of z_kappa(0), phase coordinates
  double zeta_richardson = 0.0;  // |zeta(h) - zeta(h/2)|
  bool truncated = false;
  bool bifurcation = false;
  std::string note;

  std::vector<double> periods() const;
};

struct CylinderOptions {
  double eps = 1e-2;  // half-width of the kappa window
  int steps = 4;      // samples on each side of kappa_bar
  double mesh_bound = 0.05;  // largest relative period jump between samples
  double margin_tol = 1e-3;  // the trace-based margin resolves about the square root of the trace error
  bool with_index = true;
  int index_N = 128;
  RefineOptions refine;
};

// Eigenvalues of the transverse block P read off the trace of a monodromy whose
// eigenvalue 1 is double: the remaining factor is l^2 - (tr M - 2) l + 1.
std::array<std::complex<double>, 2> transverse_spectrum(const Mat4& M);
// min |lambda - 1| over the eigenvalues of P
double nondegeneracy_margin(const Eigen::Matrix2d& P);
double nondegeneracy_margin(const std::array<std::complex<double>, 2>& spectrum);

// Secant predictor, shooting corrector with the phase condition anchored at the input
// orbit, on kappa_bar + k eps / steps for |k| <= steps.
OrbitCylinder continue_cylinder(const SurfaceModel& s, const Orbit& orbit, const CylinderOptions& opt = {});

// Natural-parameter continuation to another energy in geometrically spaced steps.
Orbit continue_to_energy(const SurfaceModel& s, const Orbit& orbit, double kappa, int steps);

void write_cylinder_csv(std::ostream& out, const OrbitCylinder& c);

}  // namespace maglab
