#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "maglab/action.hpp"
#include "maglab/dynamics.hpp"

namespace maglab {

struct RefineOptions {
  int segments = 16;
  double dt = 2e-3;  // RK4 step inside each shooting segment
  double tol = 1e-10;
  double stall_tol = 1e-7;  // accepted defect once Newton stops making progress
  int max_iter = 40;
  int steps_per_segment = 0;             // fixed RK4 step count per segment; 0 derives it from dt
  std::optional<PhasePoint> phase_ref;   // phase condition anchor; default is the first seed node
};

// Multiple-shooting Newton on the segment defects, E - kappa and a phase condition
// orthogonal to the flow at the seed. Steps are minimum-norm least squares, so a
// continuous family of orbits (symmetry) does not stall the iteration.
Orbit refine_orbit(const SurfaceModel& s, const Loop& l, double kappa, const RefineOptions& opt = {},
                   int* newton_steps = nullptr);
Orbit refine_orbit(const SurfaceModel& s, const Orbit& seed, double kappa, const RefineOptions& opt = {},
                   int* newton_steps = nullptr);
// Newton from explicit shooting nodes equally spaced over the trial period T.
Orbit refine_from_nodes(const SurfaceModel& s, std::vector<PhasePoint> nodes, double T, const Vec2i& winding,
                        double kappa, const RefineOptions& opt = {}, int* newton_steps = nullptr);

nlohmann::json orbit_to_json(const Orbit& o);
Orbit orbit_from_json(const nlohmann::json& j);

// Discrete path of loops u(sigma_i), sigma_i = i / m.
struct LoopPath {
  std::vector<Loop> nodes;
  bool fixed_start = true;
  bool fixed_end = true;

  int size() const { return static_cast<int>(nodes.size()); }
  // Throws ConfigError unless there are two nodes or more with equal windings.
  void validate() const;
};

std::vector<double> path_actions(const SurfaceModel& s, const LoopPath& p, double kappa);
// Distance in the loop-space metric after resampling both loops to n uniform samples.
double loop_distance(const SurfaceModel& s, const Loop& a, const Loop& b, int n);
// Straight segment between two loops with the same sample count and winding.
Loop blend(const Loop& a, const Loop& b, double t);
LoopPath linear_path(const Loop& a, const Loop& b, int m);
LoopPath iterate_path(const LoopPath& p, int n);

struct DeepLoopOptions {
  double margin = 0.25;
  std::vector<double> radii = {0.25, 0.5, 1.0, 2.0};
  std::vector<double> aspects = {1.0, 4.0};  // elongation along the initial direction of the class loop
  int N = 128;
  int max_iter = 3000;
};

// A loop in the class of `cls` with action below S(cls) - margin, found by descending
// the class loop with a large contractible loop attached at its base point.
// Throws NumericalError("not-found").
Loop deep_loop(const SurfaceModel& s, double kappa, const Loop& cls, const DeepLoopOptions& opt = {});

struct BangertOptions {
  double mesh_bound = 0.5;
  int max_refine = 6;  // bisections per gap
  int hair_nodes = 8;
};

struct BangertPath {
  LoopPath path;
  std::vector<double> actions;
  double max_action = 0.0;
  double A = 0.0;
  double bound = 0.0;  // n * max(S(mu0), S(mu1)) + A
  // the four terms of A: -min S(mu_i), max_s S(tau|[0,s]), S(tau_hat), max_s S(gamma_s)
  double A_terms[4] = {0.0, 0.0, 0.0, 0.0};
};

// Path from mu0^n to mu1^n pulling one loop of mu0^n at a time across u1. u1 must run
// from mu0 to mu1 through loops of equal sample count; its base-point track tau closes
// the juxtapositions and tau_hat is tau reversed.
BangertPath build_bangert_path(const SurfaceModel& s, double kappa, const Loop& mu0, const Loop& mu1,
                               const LoopPath& u1, int n, const BangertOptions& opt = {});

struct MountainPassOptions {
  int nodes = 64;  // path is resampled to this many nodes
  int N = 0;       // samples per loop; 0 keeps the largest sample count of the input
  int max_iter = 2000;
  double grad_tol = 1e-3;     // capture threshold at the top node
  int climb_after = 200;      // iterations before the top node starts climbing
  double step0 = 0.05;
  double trust_radius = 0.02;  // largest sample displacement per step
  double newton_capture = 5e-2;  // try polish + refine below this top-node gradient
  bool refine = true;
  RefineOptions refine_opt;
};

struct MinimaxRecord {
  double kappa = 0.0;
  int n = 1;
  double value = 0.0;  // min over iterations of the path maximum: upper bound of the minimax
  int argmax = 0;
  std::vector<double> value_trace;
  std::vector<double> max_trace;
  std::vector<double> final_actions;
  double endpoint_level = 0.0;
  double top_grad = 0.0;
  int iterations = 0;
  bool captured = false;    // top node gradient went below the capture threshold
  bool degenerate = false;  // path maximum fell to the endpoint level
  std::string status;
  std::optional<Loop> critical_loop;
  std::optional<Orbit> candidate;
  int index = -1;
  int index_T = -1;
  double candidate_action = 0.0;
  int refine_steps = 0;
  LoopPath final_path;
};

MinimaxRecord mountain_pass(const SurfaceModel& s, double kappa, const LoopPath& path, const MountainPassOptions& opt = {});
// min over paths of max over nodes of S_kappa, for each kappa
std::vector<double> shared_values(const SurfaceModel& s, const std::vector<LoopPath>& paths,
                                  const std::vector<double>& kappas);

nlohmann::json record_to_json(const MinimaxRecord& r);

struct SplitResult {
  double S = 0.0;      // split time, measured from the new base point
  double shift = 0.0;  // time-shift of the input applied before splitting
  int k = 0;           // turn index of the lemma
  double sigma = 0.0;
  Loop loop;  // shifted input with the two split points inserted as nodes
  Loop first;
  Loop rest;
};

// Splits a loop close to the n-th iterate of the orbit into a loop close to the orbit and
// one close to its (n-1)-st iterate. Throws NumericalError("not-applicable") if the loop
// leaves the annulus of half-width `width` around the orbit or does not wind monotonically.
SplitResult detect_split(const SurfaceModel& s, const Loop& loop, const Orbit& base, int n, double width = 0.05,
                         int samples = 2048);
// C^0 and C^1 distances after aligning parametrizations (positions, then velocities dx/dt).
double c1_distance(const Loop& a, const Loop& b, int n = 512);

}  // namespace maglab
