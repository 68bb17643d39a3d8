#pragma once

#include <iosfwd>
#include <vector>

#include "maglab/geometry.hpp"

namespace maglab {

using Vec2i = Eigen::Vector2i;

// A tangent vector at a point of the universal cover R^2.
struct PhasePoint {
  Vec2 x = Vec2::Zero();
  Vec2 v = Vec2::Zero();
};

struct CotangentPoint {
  Vec2 x = Vec2::Zero();
  Vec2 p = Vec2::Zero();
};

struct StepControl {
  double dt = 1e-3;
  bool project_energy = false;
  double min_dt = 1e-9;
  double drift_cap = 1e-6;  // relative energy drift that triggers step halving
};

// A periodic solution stored by multiple-shooting nodes equally spaced in time.
struct Orbit {
  PhasePoint z0;
  double T = 0.0;
  double kappa = 0.0;
  Vec2i winding = Vec2i::Zero();
  double residual = 0.0;
  std::vector<PhasePoint> nodes;  // nodes[0] == z0
  int steps_per_segment = 0;

  int segments() const { return static_cast<int>(nodes.size()); }
};

// Differential of the time-T flow. M acts on (x, y, p_x, p_y); M_tangent on (x, y, v_x, v_y).
struct Monodromy {
  Mat4 M;
  Mat4 M_tangent;
  PhasePoint base;
  double T = 0.0;
};

double energy(const SurfaceModel& s, const PhasePoint& z);
CotangentPoint legendre(const SurfaceModel& s, const PhasePoint& z);
PhasePoint legendre_inverse(const SurfaceModel& s, const CotangentPoint& q);
double hamiltonian(const SurfaceModel& s, const CotangentPoint& q);

// Euler-Lagrange acceleration of L = |v|^2/2 + theta(v).
Vec2 acceleration(const SurfaceModel& s, const Vec2& x, const Vec2& v);
Vec4 flow_field(const SurfaceModel& s, const PhasePoint& z);
Mat4 flow_jacobian(const SurfaceModel& s, const PhasePoint& z);

// d(x, p)/d(x, v) at z.
Mat4 legendre_jacobian(const SurfaceModel& s, const PhasePoint& z);
// X_H in cotangent coordinates.
Vec4 hamiltonian_vector(const SurfaceModel& s, const PhasePoint& z);
// omega(a, b) = a^T J b with omega = dp ^ dx, so that omega(X_H, .) = -dH.
const Mat4& symplectic_J();
double omega(const Vec4& a, const Vec4& b);

Vec4 pack(const PhasePoint& z);
PhasePoint unpack(const Vec4& y);

// Fixed-step classical RK4 with exactly `steps` steps.
PhasePoint rk4(const SurfaceModel& s, const PhasePoint& z, double t, int steps, bool project_energy = false);
// Same map together with its derivative (tangent coordinates).
PhasePoint rk4_variational(const SurfaceModel& s, const PhasePoint& z, double t, int steps, Mat4& phi);

// Integrates for time t with step control; halves the step when the state goes
// non-finite or drifts, and throws NumericalError("step-underflow") below min_dt.
PhasePoint integrate_flow(const SurfaceModel& s, const PhasePoint& z, double t, const StepControl& ctl = {});

struct FlowSample {
  double t;
  PhasePoint z;
  double E;
};
std::vector<FlowSample> trajectory(const SurfaceModel& s, const PhasePoint& z, double t, int steps,
                                   int every = 1, bool project_energy = false);
void write_trajectory_csv(std::ostream& out, const std::vector<FlowSample>& samples);

Monodromy linearize_flow(const SurfaceModel& s, const Orbit& orbit);

// Position and velocity at time t in [0, T] along the orbit.
PhasePoint orbit_state(const SurfaceModel& s, const Orbit& orbit, double t);
std::vector<PhasePoint> sample_orbit(const SurfaceModel& s, const Orbit& orbit, int n);
// Continuous free-period action and the largest relative energy error along the orbit.
double orbit_action(const SurfaceModel& s, const Orbit& orbit);
double orbit_energy_error(const SurfaceModel& s, const Orbit& orbit, int samples = 64);
// Max multiple-shooting defect (closure on the cover included).
double orbit_defect(const SurfaceModel& s, const Orbit& orbit);

}  // namespace maglab
