#include "maglab/mane.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include <fmt/format.h>

#include "maglab/errors.hpp"
#include "maglab/parallel.hpp"

namespace maglab {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Probe {
  std::vector<Loop> loops;
  std::string origin;
};

Loop polygon(const std::vector<Vec2>& v, const Vec2i& winding, int per_unit, int cap) {
  // closed polygon through v (last vertex joins v[0] + winding), sampled by arc length
  std::vector<Vec2> pts = v;
  pts.push_back(v.front() + winding.cast<double>());
  double L = 0.0;
  for (size_t k = 0; k + 1 < pts.size(); ++k) L += (pts[k + 1] - pts[k]).norm();
  const int N = std::clamp(static_cast<int>(std::ceil(L * per_unit)), 16, std::max(16, cap));
  Loop l;
  l.winding = winding;
  l.T = 1.0;
  size_t seg = 0;
  double base = 0.0;
  for (int j = 0; j < N; ++j) {
    const double t = L * j / N;
    while (seg + 2 < pts.size() && base + (pts[seg + 1] - pts[seg]).norm() <= t) base += (pts[seg + 1] - pts[seg]).norm(), ++seg;
    const double len = (pts[seg + 1] - pts[seg]).norm();
    const double r = len > 0.0 ? (t - base) / len : 0.0;
    l.x.push_back(pts[seg] + r * (pts[seg + 1] - pts[seg]));
  }
  return l;
}

std::vector<Probe> contractible_probes(const ProbeBudget& b) {
  std::vector<Probe> out;
  const int C = b.circle_centers;
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j)
      for (int k = 0; k < b.radii; ++k)
        for (int sense : {1, -1}) {
          const Vec2 c(static_cast<double>(i) / C, static_cast<double>(j) / C);
          const double r = 0.4 * std::pow(2.0, -0.5 * k);
          const int N = std::max(32, static_cast<int>(std::ceil(kTwoPi * r * b.samples_per_unit)));
          Loop l;
          l.T = 1.0;
          for (int n = 0; n < N; ++n) {
            const double a = sense * kTwoPi * n / N;
            l.x.push_back(c + r * Vec2(std::cos(a), std::sin(a)));
          }
          out.push_back({{l}, fmt::format("circle c=({:.3g},{:.3g}) r={:.3g} sense={}", c.x(), c.y(), r, sense)});
        }
  // strips: out along one line, back along another
  const int G = b.strip_offsets;
  for (int m = 1; m <= b.max_strip_length; m *= 2)
    for (int i = 0; i < G; ++i)
      for (int d = 1; d < G; ++d)
        for (int axis : {0, 1}) {
          const double a = static_cast<double>(i) / G, h = static_cast<double>(d) / G;
          auto P = [&](double along, double across) { return axis == 0 ? Vec2(along, across) : Vec2(across, along); };
          const std::vector<Vec2> v = {P(0, a), P(m, a), P(m, a + h), P(0, a + h)};
          out.push_back({{polygon(v, Vec2i::Zero(), b.samples_per_unit, b.max_samples)},
                         fmt::format("strip axis={} length={} at={:.3g} height={:.3g}", axis, m, a, h)});
        }
  return out;
}

std::vector<Probe> multicurve_probes(const ProbeBudget& b) {
  std::vector<Probe> out;
  const int G = b.strip_offsets;
  for (int i = 0; i < G; ++i)
    for (int d = 1; d < G; ++d)
      for (int axis : {0, 1}) {
        const double a = static_cast<double>(i) / G, c = a + static_cast<double>(d) / G;
        auto P = [&](double along, double across) { return axis == 0 ? Vec2(along, across) : Vec2(across, along); };
        const Vec2i w = axis == 0 ? Vec2i(1, 0) : Vec2i(0, 1);
        const Loop fwd = polygon({P(0, a)}, w, b.samples_per_unit, b.max_samples);
        Loop back = polygon({P(0, c)}, -w, b.samples_per_unit, b.max_samples);
        out.push_back({{fwd, back}, fmt::format("line pair axis={} at={:.3g} and {:.3g}", axis, a, c)});
      }
  return out;
}

double total_action(const SurfaceModel& s, const std::vector<Loop>& loops, double kappa) {
  double S = 0.0;
  for (const auto& l : loops) S += action(s, l, kappa);
  return S;
}

struct Search {
  const SurfaceModel& s;
  const std::vector<Probe>& probes;
  const ProbeBudget& budget;
  int evaluations = 0;
  int descents = 0;

  // a witness at kappa, if the family has one
  std::optional<Witness> at(double kappa) {
    std::vector<double> S(probes.size());
    parallel_for(probes.size(), budget.workers, [&](size_t k) {
      double sum = 0.0;
      for (const auto& l : probes[k].loops) sum += action(s, at_best_period(s, l, kappa), kappa);
      S[k] = sum;
    });
    evaluations += static_cast<int>(probes.size());
    std::optional<Witness> best;
    for (size_t k = 0; k < probes.size(); ++k)
      if (S[k] < 0.0 && (!best || S[k] < best->action)) {
        std::vector<Loop> ls;
        for (const auto& l : probes[k].loops) ls.push_back(at_best_period(s, l, kappa));
        best = Witness{kappa, ls, S[k], probes[k].origin};
      }
    if (best) return best;
    // descend from the first single-loop probes
    int used = 0;
    for (const auto& p : probes) {
      if (used >= budget.descents) break;
      if (p.loops.size() != 1) continue;
      ++used;
      ++descents;
      DescentOptions o;
      o.max_iter = budget.descent_iter;
      o.action_floor = 0.0;
      o.record_trace = false;
      o.newton_switch = 0.0;
      const Loop seed = resample_uniform(at_best_period(s, p.loops[0], kappa), 64);
      try {
        const DescentResult r = descend(s, seed, kappa, o);
        if (r.action < 0.0 && action(s, r.loop, kappa) < 0.0)
          return Witness{kappa, {r.loop}, action(s, r.loop, kappa), "descent from " + p.origin};
      } catch (const NumericalError&) {
      }
    }
    return std::nullopt;
  }
};

ManeBracket bracket(const SurfaceModel& s, double lo, double hi, const ProbeBudget& budget, double tol,
                    bool null_homologous) {
  if (!(lo >= 0.0) || !(hi > lo) || !(tol > 0.0)) throw ConfigError("mane: need 0 <= lo < hi and tol > 0");
  std::vector<Probe> probes = contractible_probes(budget);
  if (null_homologous)
    for (auto& p : multicurve_probes(budget)) probes.push_back(std::move(p));
  Search search{s, probes, budget};
  ManeBracket b;
  b.kind = null_homologous ? "c_0" : "c_u";
  if (search.at(hi)) throw NumericalError("window-exhausted", fmt::format("witness found at the top of the window ({:.6g})", hi));
  std::optional<Witness> w;
  if (lo > 0.0) {
    w = search.at(lo);
    if (!w) lo = 0.0;  // c >= 0 needs no witness
  }
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    ++b.bisection_steps;
    if (auto m = search.at(mid)) {
      lo = mid;
      w = std::move(m);
    } else {
      hi = mid;
    }
  }
  b.certified_lower = lo;
  b.heuristic_upper = hi;
  if (lo > 0.0 && w) b.witnesses.push_back(*w);
  b.probes = search.evaluations;
  b.descents = search.descents;
  return b;
}
}  // namespace

double witness_threshold(const SurfaceModel& s, const Loop& l) {
  Loop a = l, c = l;
  a.T = 1.0;
  c.T = 2.0;
  const double S1 = action(s, a, 0.0), S2 = action(s, c, 0.0);
  const double K = 2.0 * (S1 - S2), Theta = 2.0 * S2 - S1;
  if (!(Theta < 0.0) || !(K > 0.0)) return 0.0;
  return Theta * Theta / (4.0 * K);
}

Loop at_best_period(const SurfaceModel& s, const Loop& l, double kappa) {
  Loop a = l, c = l;
  a.T = 1.0;
  c.T = 2.0;
  const double K = 2.0 * (action(s, a, 0.0) - action(s, c, 0.0));
  Loop out = l;
  out.T = K > 0.0 && kappa > 0.0 ? std::sqrt(K / kappa) : l.T;
  return out;
}

bool validate_witness(const SurfaceModel& s, const Witness& w, bool contractible) {
  if (w.loops.empty()) return false;
  Vec2i total = Vec2i::Zero();
  for (const auto& l : w.loops) {
    if (l.size() < 3 || !(l.T > 0.0)) return false;
    total += l.winding;
  }
  if (total != Vec2i::Zero()) return false;
  if (contractible && (w.loops.size() != 1 || w.loops[0].winding != Vec2i::Zero())) return false;
  return total_action(s, w.loops, w.kappa) < 0.0;
}

ManeBracket bracket_cu(const SurfaceModel& s, double lo, double hi, const ProbeBudget& budget, double tol) {
  return bracket(s, lo, hi, budget, tol, false);
}

ManeBracket bracket_c0(const SurfaceModel& s, double lo, double hi, const ProbeBudget& budget, double tol) {
  return bracket(s, lo, hi, budget, tol, true);
}

nlohmann::json bracket_to_json(const ManeBracket& b) {
  nlohmann::json j;
  j["kind"] = b.kind;
  j["certified_lower"] = b.certified_lower;
  j["heuristic_upper"] = b.heuristic_upper;
  j["probes"] = b.probes;
  j["bisection_steps"] = b.bisection_steps;
  j["descents"] = b.descents;
  auto ws = nlohmann::json::array();
  for (const auto& w : b.witnesses) {
    nlohmann::json x;
    x["kappa"] = w.kappa;
    x["action"] = w.action;
    x["origin"] = w.origin;
    auto ls = nlohmann::json::array();
    for (const auto& l : w.loops) ls.push_back(loop_to_json(l));
    x["loops"] = ls;
    ws.push_back(x);
  }
  j["witnesses"] = ws;
  return j;
}

}  // namespace maglab
