#pragma once

#include <complex>
#include <vector>

#include "json.hpp"
#include "maglab/dynamics.hpp"
#include "maglab/geometry.hpp"

namespace maglab {

// Discrete closed curve with free period. Cell c runs from node c to node c+1
// (node N is node 0 shifted by the winding) and lasts T * weight(c).
struct Loop {
  std::vector<Vec2> x;
  double T = 1.0;
  Vec2i winding = Vec2i::Zero();
  std::vector<double> w;  // cell fractions of T summing to 1; empty means uniform

  int size() const { return static_cast<int>(x.size()); }
  bool uniform() const { return w.empty(); }
  double weight(int c) const { return w.empty() ? 1.0 / x.size() : w[c]; }
  Vec2 node(int j) const;  // j in [0, N]
  void validate() const;
};

struct LoopTangent {
  std::vector<Vec2> xi;
  double tau = 0.0;

  static LoopTangent zero(int n);
  LoopTangent& operator+=(const LoopTangent& o);
  LoopTangent operator*(double a) const;
};

Loop apply(const Loop& l, const LoopTangent& t, double step);

// Open curve with explicit cell durations; juxtaposition happens at this level.
struct Curve {
  std::vector<Vec2> x;    // size = cells + 1
  std::vector<double> dt;  // cell durations

  double duration() const;
};

Curve to_curve(const Loop& l);
// Appends b after a, translating b by a lattice vector so that it starts at a's end.
Curve juxtapose(const Curve& a, const Curve& b);
Curve reversed(const Curve& c);
// Closed curve back to a loop; throws if the endpoints differ modulo Z^2.
Loop to_loop(const Curve& c);
// Same curve at uniform time steps (linear interpolation in time).
Loop resample_uniform(const Loop& l, int n);

// The blend weight of the loop-space metric: T^2 below 1/2, 1 above 1, quintic in between.
double phi_weight(double T);

double action(const SurfaceModel& s, const Loop& l, double kappa);
double curve_action(const SurfaceModel& s, const Curve& c, double kappa);

// Partial derivatives dS/dx_j and dS/dT (the differential, no metric).
LoopTangent action_differential(const SurfaceModel& s, const Loop& l, double kappa);
// dS/dT alone (one pass over the samples, no derivatives of the data).
double period_derivative(const SurfaceModel& s, const Loop& l, double kappa);
// Gradient in <(xi1,tau1),(xi2,tau2)> = tau1 tau2 + phi(T) <xi1, xi2>_{H1}.
LoopTangent grad_action(const SurfaceModel& s, const Loop& l, double kappa);
double h1_inner(const SurfaceModel& s, const Loop& l, const std::vector<Vec2>& a, const std::vector<Vec2>& b);
double metric_norm(const SurfaceModel& s, const Loop& l, const LoopTangent& t);
// Dense matrix of the loop-space metric in (x_0, ..., x_{N-1}, T).
Eigen::MatrixXd metric_matrix(const SurfaceModel& s, const Loop& l);

// Discrete length sum sqrt(avg G) |dx| and the trapezoid integral of theta.
double loop_length(const SurfaceModel& s, const Loop& l);
double theta_integral(const SurfaceModel& s, const Loop& l);

Loop iterate(const Loop& l, int n);
Loop constant_loop(const Vec2& p, double T, int N);
Loop orbit_to_loop(const SurfaceModel& s, const Orbit& orbit, int N);

// Per-cell second derivatives of the action in (a, b, T).
struct CellHessian {
  Eigen::Matrix4d H;  // (a, b) block
  Eigen::Vector4d HT;  // d^2/dT d(a, b)
  double HTT = 0.0;
};
std::vector<CellHessian> cell_hessians(const SurfaceModel& s, const Loop& l, double kappa);
// Dense Hessian in (x_0, ..., x_{N-1}, T).
Eigen::MatrixXd free_period_hessian(const SurfaceModel& s, const Loop& l, double kappa);

struct IndexCount {
  int negative = 0;
  int marginal = 0;       // eigenvalues with |lambda| <= tol * scale
  double scale = 0.0;     // largest |lambda|
  double min_abs = 0.0;   // smallest |lambda| among the counted spectrum
  Eigen::VectorXd spectrum;
};

constexpr double kDegeneracyTol = 1e-8;

// Negative inertia of the fixed-period second variation under xi(s+1) = z xi(s).
// At z = 1 eigenvalues inside the degeneracy tolerance are not counted (the loop's own
// time-shift direction is one of them at a discrete critical point).
IndexCount twisted_hessian_index(const SurfaceModel& s, const Loop& l, double kappa, std::complex<double> z);
// i_T: fixed period, restricted to the complement of the discrete velocity field.
IndexCount fixed_period_index(const SurfaceModel& s, const Loop& l, double kappa);
// i: free period, restricted to the complement of (velocity, 0).
IndexCount free_period_hessian_index(const SurfaceModel& s, const Loop& l, double kappa);

// Newton on the discrete Euler-Lagrange equations; pseudo-inverse over near-null directions.
struct PolishResult {
  Loop loop;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};
PolishResult polish_critical(const SurfaceModel& s, const Loop& l, double kappa, double tol = 1e-11,
                             int max_iter = 30);

nlohmann::json loop_to_json(const Loop& l);
Loop loop_from_json(const nlohmann::json& j);

}  // namespace maglab
