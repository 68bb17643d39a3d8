#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "maglab/action.hpp"
#include "maglab/localmin.hpp"

namespace maglab {

struct ProbeBudget {
  int circle_centers = 4;   // per side; a power of two keeps larger budgets nested
  int radii = 6;            // 0.4 * 2^(-k/2)
  int strip_offsets = 8;    // line heights per unit
  int max_strip_length = 1024;  // strip lengths 1, 2, 4, ... up to this
  int descents = 2;         // seeds descended at each probed kappa when the fixed probes fail
  int descent_iter = 400;
  int samples_per_unit = 16;
  int max_samples = 2048;   // per probe loop
  int workers = 1;
};

// A loop, or for c_0 a multicurve, with negative action at kappa.
struct Witness {
  double kappa = 0.0;
  std::vector<Loop> loops;
  double action = 0.0;
  std::string origin;
};

struct ManeBracket {
  std::string kind;               // "c_u" or "c_0"
  double certified_lower = 0.0;   // a witness exists at this kappa (0 needs none)
  double heuristic_upper = 0.0;   // no witness found at or above this kappa
  std::vector<Witness> witnesses;  // the witness at certified_lower, when positive
  int probes = 0;
  int bisection_steps = 0;
  int descents = 0;
};

// Largest kappa for which the loop has negative action at its best period:
// S(T) = K / T + Theta + kappa T, so kappa* = Theta^2 / (4 K) when Theta < 0, else 0.
double witness_threshold(const SurfaceModel& s, const Loop& l);
// The loop with the period that minimizes S_kappa.
Loop at_best_period(const SurfaceModel& s, const Loop& l, double kappa);

// Re-evaluates the witness with module action: negative total action, components closed,
// total winding zero (contractible loops for c_u).
bool validate_witness(const SurfaceModel& s, const Witness& w, bool contractible);

ManeBracket bracket_cu(const SurfaceModel& s, double lo, double hi, const ProbeBudget& budget = {}, double tol = 1e-3);
ManeBracket bracket_c0(const SurfaceModel& s, double lo, double hi, const ProbeBudget& budget = {}, double tol = 1e-3);

nlohmann::json bracket_to_json(const ManeBracket& b);

}  // namespace maglab
