#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "maglab/action.hpp"
#include "maglab/dynamics.hpp"

namespace maglab {

// Replaces each of the h arcs between break nodes by the fixed-time discrete action
// minimizer with the same endpoints. Throws NumericalError("h-too-small") when an arc
// is too long for the boundary value problem to be uniquely solvable.
Loop smooth_project(const SurfaceModel& s, const Loop& l, double kappa, int h);

struct DescentOptions {
  double grad_tol = 1e-6;
  double T_min = 1e-3;
  double action_tol = 1e-4;
  double action_floor = -10.0;  // below this the class is reported Unbounded
  double T_max = 50.0;
  int max_iter = 20000;
  int smooth_every = 50;
  int smooth_cells = 8;           // cells per smoothing arc
  double newton_switch = 1e-4;    // try a Newton finish below this gradient norm
  bool record_trace = true;
};

enum class DescentStatus { Minimizer, CollapsedToPoint, MaxIter, Unbounded };
std::string to_string(DescentStatus s);

struct DescentResult {
  DescentStatus status = DescentStatus::MaxIter;
  Loop loop;
  double action = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // action after each accepted step
};

DescentResult descend(const SurfaceModel& s, const Loop& seed, double kappa, const DescentOptions& opt = {});

struct SeedFamily {
  int radii = 8;
  int centers_per_side = 3;  // centers on a 3 x 3 grid
  bool both_orientations = true;
  std::vector<Vec2i> windings = {Vec2i(1, 0), Vec2i(-1, 0), Vec2i(0, 1), Vec2i(0, -1)};
  std::vector<double> period_factors = {0.6, 0.8, 1.0, 1.25, 1.6};  // times length / sqrt(2 kappa)
  int N = 64;         // samples during the scan
  int N_final = 256;  // samples of the returned loop
  int scan_max_iter = 1500;
  double scan_action_floor = -2.0;  // scan descents below this are classed Unbounded
};

std::vector<Loop> seed_loops(const SurfaceModel& s, double kappa, const SeedFamily& fam);

struct SeedOutcome {
  int seed = 0;
  Vec2i winding = Vec2i::Zero();
  DescentStatus status = DescentStatus::MaxIter;
  double action = 0.0;
};

struct AlphaResult {
  Orbit orbit;
  Loop loop;  // polished discrete critical loop at N_final
  double action = 0.0;
  int index = 0;
  int index_T = 0;
  std::vector<SeedOutcome> outcomes;
};

// Best negative-action local minimizer over the seed family; throws
// NumericalError("not-found") when no seed descends to one.
AlphaResult find_alpha(const SurfaceModel& s, double kappa, const SeedFamily& fam = {},
                       const DescentOptions& opt = {});

struct BarrierOptions {
  int probes = 16;
  int refine_steps = 2000;
  unsigned long long seed = 1;
};

// Estimated inf of S over the metric sphere of the given radius around the loop,
// normal to its time-shift direction, minus S at the loop. Heuristic: random probes
// followed by projected gradient descent on the sphere.
double strictness_barrier(const SurfaceModel& s, const Loop& critical, double kappa, double radius,
                          const BarrierOptions& opt = {});
double strictness_barrier(const SurfaceModel& s, const Orbit& orbit, double kappa, double radius, int N = 128,
                          const BarrierOptions& opt = {});

// Circular sample shift of b that best matches a (loops with equal sample count and winding).
int best_shift(const Loop& a, const Loop& b);
// max_j |a_j - b(j + shift)| minimized over continuous shifts (cubic interpolation
// between samples) and lattice translations.
double aligned_distance(const Loop& a, const Loop& b);
// The fractional start index of b realizing aligned_distance.
double best_fractional_shift(const Loop& a, const Loop& b);
// Catmull-Rom interpolation of the samples at fractional index t, continued on the cover.
Vec2 sample_at(const Loop& b, double t);
// Same loop started at sample k.
Loop shift_samples(const Loop& l, int k);

struct MinimizerEntry {
  Loop loop;
  double action = 0.0;
  int index = 0;
  double energy_residual = 0.0;
};
nlohmann::json registry_to_json(const std::vector<std::pair<double, std::vector<MinimizerEntry>>>& registry);

}  // namespace maglab
