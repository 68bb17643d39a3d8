#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "maglab/index.hpp"
#include "maglab/localmin.hpp"
#include "maglab/minimax.hpp"

namespace maglab {

struct Revalidation {
  double residual = 0.0;
  double energy_error = 0.0;  // |E - kappa| / kappa
  double action_diff = 0.0;   // stored vs recomputed from the serialized orbit
  bool ok = false;
};

struct OrbitRecord {
  std::string label;
  Orbit orbit;
  double action = 0.0;
  int i = -1;
  int i_T = -1;
  double mean_index = 0.0;
  bool mean_from_monodromy = true;  // false: uniform grid only, the monodromy overflowed
  bool degenerate = false;
  double shear = 0.0;
  std::string stability;
  bool theorem_checked = false;
  bool theorem_holds = true;
  std::string note;
  Revalidation check;
};

// Re-reads the orbit from its JSON form and recomputes defect, energy and action.
Revalidation revalidate(const SurfaceModel& s, const OrbitRecord& r);

struct Distinctness {
  std::string a, b;
  bool distinct = true;
  int k = 0;               // b is the k-th iterate of a (or a of b when k < 0)
  double distance = -1.0;  // smallest aligned C^0 distance tested, -1 when no period matched
  std::string reason;
};

// Same orbit up to time shift and iteration k <= k_max when the aligned C^0 distance of
// the k-fold iterate is below tol.
Distinctness compare_orbits(const SurfaceModel& s, const OrbitRecord& a, const OrbitRecord& b, int k_max = 8,
                            double tol = 1e-5);

struct GammaSearchOptions {
  int centers = 4;  // per side
  std::vector<double> radii = {0.4, 0.3, 0.2};
  int N = 64;
  int path_nodes = 16;
  double shrink = 0.05;  // the path starts at this fraction of the probe circle
  int attempts = 3;
  MountainPassOptions mp = [] {
    MountainPassOptions m;
    m.nodes = 32;
    return m;
  }();
};

struct ExperimentOptions {
  SeedFamily seeds;
  DescentOptions descent;
  int loop_N = 64;  // samples of alpha and mu on the path stage
  DeepLoopOptions deep = [] {
    DeepLoopOptions d;
    d.N = 64;
    return d;
  }();
  int u1_nodes = 16;
  MountainPassOptions beta_mp = [] {
    MountainPassOptions m;
    m.nodes = 32;
    return m;
  }();
  std::vector<int> ladder = {1, 2, 4, 8};
  MountainPassOptions ladder_mp = [] {
    MountainPassOptions m;
    m.nodes = 24;
    m.max_iter = 2000;
    return m;
  }();
  BangertOptions bangert;
  BarrierOptions barrier;
  double barrier_radius = 0.02;
  GammaSearchOptions gamma;
  IndexOptions index = [] {
    IndexOptions o;
    o.bott.fine = 64;
    return o;
  }();
  double samples_per_time = 24.0;  // Hessian samples per unit period, clamped to [64, 384]
  std::optional<double> certified_lower;  // c_u certificate; kappa must not exceed it
  double subcritical_margin = 0.05;
  int distinct_k_max = 8;
  double distinct_tol = 1e-5;
  double mean_tol = 0.05;  // mean-index comparisons between an orbit and its iterate
  int workers = 1;
};

struct LadderEntry {
  int n = 1;
  double q = 0.0;  // minimax value estimate
  double bangert_max = 0.0;
  double bangert_bound = 0.0;
  double A = 0.0;
  std::string status;
  std::optional<OrbitRecord> beta;
  std::string error;
};

struct InfinitudeReport {
  double kappa = 0.0;
  std::vector<LadderEntry> entries;
  std::vector<Distinctness> pairs;  // refined beta_n against alpha and each other
  bool q_decreasing = true;
  bool mean_positive = true;     // every non-degenerate beta_n with i = 1 has mean index > 0
  bool iterate_scaling = true;   // mean(beta) = k mean(delta) when beta = delta^k
  bool no_zero_mean_root = true;
  std::vector<std::string> notes;
};

struct RunReport {
  double kappa = 0.0;
  std::optional<OrbitRecord> alpha;
  std::optional<OrbitRecord> beta;
  std::optional<OrbitRecord> gamma;
  double alpha_barrier = 0.0;
  double beta_value = 0.0;
  std::string beta_status;
  std::string gamma_origin;
  std::vector<Distinctness> pairs;
  std::optional<InfinitudeReport> ladder;
  std::vector<std::string> errors;  // stage failures, reported instead of orbits
  bool all_revalidated = true;
};

// alpha_kappa (local minimizer), beta_kappa (mountain pass over the path alpha -> mu),
// gamma_kappa (positive-action contractible search) and, with a nonempty ladder, the
// infinitude probe. Stage failures end up in errors.
RunReport three_orbit_run(const SurfaceModel& s, double kappa, const ExperimentOptions& opt = {});
InfinitudeReport infinitude_probe(const SurfaceModel& s, double kappa, const std::vector<int>& ladder,
                                  const ExperimentOptions& opt = {});
std::vector<RunReport> run_grid(const SurfaceModel& s, const std::vector<double>& kappas,
                                const ExperimentOptions& opt = {});

// Index data of a refined orbit; falls back to the uniform Bott grid when the monodromy
// cannot be propagated.
OrbitRecord make_record(const SurfaceModel& s, const std::string& label, const Orbit& o,
                        const ExperimentOptions& opt = {});

nlohmann::json record_to_json(const OrbitRecord& r);
nlohmann::json distinctness_to_json(const Distinctness& d);
nlohmann::json infinitude_to_json(const InfinitudeReport& r);
nlohmann::json run_report_to_json(const RunReport& r);
void write_summary_csv(std::ostream& out, const std::vector<RunReport>& runs);

}  // namespace maglab
