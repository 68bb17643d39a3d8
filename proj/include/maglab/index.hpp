#pragma once

#include <array>
#include <complex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "maglab/action.hpp"
#include "maglab/continuation.hpp"
#include "maglab/dynamics.hpp"

namespace maglab {

enum class StabilityClass { NonHyperbolic, OddHyperbolic, EvenHyperbolic, TransversallyDegenerate };
std::string to_string(StabilityClass c);

// Monodromy in the basis (X_H, zeta, e1, e2), with (e1, e2) a symplectic basis of the
// omega-complement W of span(X_H, zeta).
struct ReducedPoincare {
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
  double shear = 0.0;  // the T' entry of the V block
  Vec4 X_H = Vec4::Zero();
  Vec4 zeta = Vec4::Zero();
  Mat4 basis = Mat4::Identity();  // columns X_H, zeta, e1, e2
  Mat4 block = Mat4::Identity();  // basis^-1 M basis
  double det_P = 1.0;
  double omega_XZ = 0.0;        // omega(X_H, zeta)
  double block_residual = 0.0;  // largest entry outside the V and W blocks, relative to |M|
  double spectrum_mismatch = 0.0;  // sigma(M) vs {1, 1} u sigma(P)
  double margin = 0.0;             // min |lambda - 1| over sigma(P)
  bool degenerate = false;
  bool symmetry_degenerate = false;  // a translation symmetry fixes a vector outside span(X_H, zeta)
};

ReducedPoincare poincare_reduce(const SurfaceModel& s, const Monodromy& m, const Vec4& zeta,
                                double margin_tol = 1e-3);
ReducedPoincare poincare_reduce(const SurfaceModel& s, const Monodromy& m, const OrbitCylinder& cyl,
                                double margin_tol = 1e-3);

struct BottSample {
  double arg = 0.0;  // z = exp(i arg), arg in [0, 2 pi)
  int value = 0;
  int marginal = 0;
};

struct BottOptions {
  int n_max = 4;       // all n-th roots of unity for n <= n_max
  int fine = 256;      // uniform midpoint grid
  int ladder = 3;      // eps = 2 pi / 1024, halved ladder - 1 times
  int near = 6;        // points on each side of a unit-circle eigenvalue
  double near_width = 0.05;
  double circle_tol = 1e-3;  // |lambda| within this of 1 counts as on the circle
  int workers = 1;
};

struct BottFunction {
  std::vector<BottSample> samples;  // sorted by arg
  std::vector<double> eigen_args;   // args of unit-circle eigenvalues of M, 0 included
  std::vector<double> eps;          // splitting ladder
  int lambda_one = 0;               // Lambda(1)
  bool property_i = true;           // every jump lies near an element of eigen_args
  std::vector<double> unexplained;  // args of jumps that do not
  int marginal = 0;                 // total marginal eigenvalues over the grid
  int value_at(double arg) const;   // exact grid lookup; throws if arg is not on the grid
};

// Lambda(z) by the twisted Hessian index of the discrete critical loop l. M supplies the
// unit-circle eigenvalues around which the grid is refined.
BottFunction bott_function(const SurfaceModel& s, const Loop& l, double kappa, const Mat4& M,
                           const BottOptions& opt = {});

struct SplittingNumbers {
  int plus = 0;
  int minus = 0;
  bool stable = true;  // same value at every rung of the eps ladder
  std::vector<std::array<int, 2>> ladder;
};
SplittingNumbers splitting_numbers(const BottFunction& b);

// (1 / 2 pi) * integral of Lambda over the circle, with each sample weighted by half the
// gap to its neighbours; z = 1 is a single point and carries no weight.
double mean_index(const BottFunction& b);

struct BottIteration {
  int n = 0;
  int sum = 0;     // sum of Lambda over the n-th roots of unity
  int direct = 0;  // fixed-period index of the n-fold iterate
  bool holds() const { return sum == direct; }
};
std::vector<BottIteration> bott_iteration_check(const SurfaceModel& s, const Loop& l, double kappa,
                                                const BottFunction& b, int n_max);

struct IndexRelation {
  bool consistent = true;
  bool marginal = false;  // |shear| below tolerance, checked under the shear >= 0 branch
  std::string message;
};
IndexRelation index_relation_check(double shear, int i, int i_T, double shear_tol = 1e-4);

struct Classification {
  StabilityClass cls = StabilityClass::NonHyperbolic;
  bool borderline = false;  // real spectrum within resolution of the unit circle but off it
  std::array<std::complex<double>, 2> spectrum{};
  bool expected = true;  // odd index or degenerate implies NonHyperbolic, OddHyperbolic or degenerate
};
Classification classify(const Monodromy& m, const ReducedPoincare& r, int i, double unit_tol = 1e-5,
                        double resolution = 1e-3);

struct IndexOptions {
  int N = 128;  // loop resolution for the Hessian counts
  BottOptions bott;
  CylinderOptions cylinder = [] {
    CylinderOptions c;
    c.eps = 2e-3;
    c.steps = 2;
    c.with_index = false;
    return c;
  }();
  double shear_tol = 1e-4;
};

struct IndexReport {
  Orbit orbit;
  double action = 0.0;
  int i_T = 0;
  int i = 0;
  int marginal = 0;
  double polish_grad = 0.0;
  ReducedPoincare reduced;
  double T_prime = 0.0;  // from the continued cylinder
  std::string cylinder_note;
  BottFunction bott;
  SplittingNumbers split;
  double mean_index = 0.0;
  std::vector<BottIteration> iteration;
  double mean_vs_iterate = 0.0;  // |mean - i_nT / n| at the largest n
  IndexRelation relation;
  Classification stability;
  bool theorem_checked = false;  // non-degenerate with shear >= 0
  bool theorem_holds = true;     // then mean index > 0
};

IndexReport analyze_orbit(const SurfaceModel& s, const Orbit& orbit, const IndexOptions& opt = {});

nlohmann::json index_report_to_json(const IndexReport& r);
void write_bott_csv(std::ostream& out, const BottFunction& b);

}  // namespace maglab
