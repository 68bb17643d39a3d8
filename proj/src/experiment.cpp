#include "maglab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "maglab/errors.hpp"
#include "maglab/mane.hpp"
#include "maglab/parallel.hpp"

namespace maglab {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct PathStage {
  AlphaResult alpha;
  OrbitRecord alpha_record;
  Loop a;  // alpha at loop_N samples
  Loop mu;
  LoopPath u1;
};

PathStage build_stage(const SurfaceModel& s, double kappa, const ExperimentOptions& opt) {
  PathStage st;
  st.alpha = find_alpha(s, kappa, opt.seeds, opt.descent);
  st.alpha_record = make_record(s, "alpha", st.alpha.orbit, opt);
  st.a = polish_critical(s, orbit_to_loop(s, st.alpha.orbit, opt.loop_N), kappa).loop;
  st.mu = deep_loop(s, kappa, st.a, opt.deep);
  st.mu = shift_samples(st.mu, best_shift(st.a, st.mu));
  st.u1 = linear_path(st.a, st.mu, opt.u1_nodes);
  return st;
}

void check_subcritical(double kappa, const ExperimentOptions& opt) {
  if (!(kappa > 0.0)) throw ConfigError("experiment: kappa must be positive");
  if (opt.certified_lower && kappa > *opt.certified_lower * (1.0 - opt.subcritical_margin))
    throw ConfigError(fmt::format("experiment: kappa {:.6g} exceeds the certified bound {:.6g} * (1 - {:.3g})", kappa,
                                  *opt.certified_lower, opt.subcritical_margin));
}

std::string stage_error(const std::string& stage, const std::exception& e) { return stage + ": " + e.what(); }

// contractible positive-action orbit by mountain pass from a shrunken circle to a negative one
std::optional<Orbit> gamma_search(const SurfaceModel& s, double kappa, const GammaSearchOptions& g, std::string& origin,
                                  std::vector<std::string>& errors) {
  struct Cand {
    Vec2 c;
    double r;
    int sense;
    double threshold;
    Loop loop;
  };
  std::vector<Cand> cands;
  for (int i = 0; i < g.centers; ++i)
    for (int j = 0; j < g.centers; ++j)
      for (double r : g.radii)
        for (int sense : {1, -1}) {
          const Vec2 c(static_cast<double>(i) / g.centers, static_cast<double>(j) / g.centers);
          Loop l;
          l.T = 1.0;
          for (int n = 0; n < g.N; ++n) {
            const double a = sense * kTwoPi * n / g.N;
            l.x.push_back(c + r * Vec2(std::cos(a), std::sin(a)));
          }
          const double th = witness_threshold(s, l);
          if (th > kappa) cands.push_back({c, r, sense, th, l});
        }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.threshold > b.threshold; });
  if (cands.empty()) {
    errors.push_back("gamma: no probe circle has negative action at this kappa");
    return std::nullopt;
  }
  for (int k = 0; k < std::min<int>(g.attempts, cands.size()); ++k) {
    const Cand& cd = cands[k];
    LoopPath p;
    for (int i = 0; i <= g.path_nodes; ++i) {
      const double lam = g.shrink + (1.0 - g.shrink) * i / g.path_nodes;
      Loop l = cd.loop;
      for (auto& x : l.x) x = cd.c + lam * (x - cd.c);
      p.nodes.push_back(at_best_period(s, l, kappa));
    }
    const std::string tag = fmt::format("circle c=({:.3g},{:.3g}) r={:.3g} sense={}", cd.c.x(), cd.c.y(), cd.r, cd.sense);
    try {
      const MinimaxRecord rec = mountain_pass(s, kappa, p, g.mp);
      if (!rec.candidate) {
        errors.push_back("gamma: mountain pass from " + tag + " ended " + rec.status);
        continue;
      }
      const double S = orbit_action(s, *rec.candidate);
      if (rec.candidate->winding != Vec2i::Zero() || !(S > 0.0)) {
        errors.push_back(fmt::format("gamma: candidate from {} has action {:.6g}", tag, S));
        continue;
      }
      origin = "mountain pass from a point to " + tag;
      return rec.candidate;
    } catch (const NumericalError& e) {
      errors.push_back(stage_error("gamma (" + tag + ")", e));
    }
  }
  return std::nullopt;
}

InfinitudeReport run_ladder(const SurfaceModel& s, double kappa, const PathStage& st, const std::vector<int>& ladder,
                            const ExperimentOptions& opt) {
  InfinitudeReport rep;
  rep.kappa = kappa;
  std::vector<int> ns = ladder;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  if (ns.empty() || ns.front() < 1) throw ConfigError("infinitude_probe: ladder entries must be >= 1");
  if (st.alpha_record.degenerate)
    throw NumericalError("not-applicable", "alpha is transversally degenerate");

  ExperimentOptions inner = opt;
  inner.workers = 1;
  rep.entries.resize(ns.size());
  parallel_for(static_cast<int>(ns.size()), opt.workers, [&](int k) {
    LadderEntry& e = rep.entries[k];
    e.n = ns[k];
    try {
      const BangertPath bp = build_bangert_path(s, kappa, st.a, st.mu, st.u1, e.n, opt.bangert);
      e.bangert_max = bp.max_action;
      e.bangert_bound = bp.bound;
      e.A = bp.A;
      const MinimaxRecord rec = mountain_pass(s, kappa, bp.path, opt.ladder_mp);
      e.q = rec.value;
      e.status = rec.status;
      if (rec.candidate) e.beta = make_record(s, fmt::format("beta_{}", e.n), *rec.candidate, inner);
    } catch (const NumericalError& ex) {
      e.error = ex.what();
    }
  });

  for (size_t k = 1; k < rep.entries.size(); ++k)
    if (!rep.entries[k].error.empty() || !rep.entries[k - 1].error.empty() || !(rep.entries[k].q < rep.entries[k - 1].q))
      rep.q_decreasing = false;

  std::vector<const OrbitRecord*> found = {&st.alpha_record};
  for (const auto& e : rep.entries) {
    if (!e.beta) {
      rep.notes.push_back(fmt::format("n = {}: no refined orbit ({})", e.n, e.error.empty() ? e.status : e.error));
      continue;
    }
    const OrbitRecord& b = *e.beta;
    if (b.i == 1 && !b.degenerate && !(b.mean_index > 0.0)) rep.mean_positive = false;
    for (const OrbitRecord* d : found) {
      const Distinctness c = compare_orbits(s, *d, b, opt.distinct_k_max, opt.distinct_tol);
      rep.pairs.push_back(c);
      if (c.distinct || c.k <= 0) continue;
      if (std::abs(b.mean_index - c.k * d->mean_index) > opt.mean_tol) rep.iterate_scaling = false;
      if (b.mean_index > opt.mean_tol && std::abs(d->mean_index) <= opt.mean_tol) rep.no_zero_mean_root = false;
    }
    found.push_back(&b);
  }
  return rep;
}

Loop sampled(const SurfaceModel& s, const Orbit& o, int k, int per) {
  Loop l = orbit_to_loop(s, o, per);
  return k > 1 ? iterate(l, k) : l;
}
}  // namespace

Revalidation revalidate(const SurfaceModel& s, const OrbitRecord& r) {
  Revalidation v;
  const Orbit o = orbit_from_json(orbit_to_json(r.orbit));
  v.residual = orbit_defect(s, o);
  v.energy_error = orbit_energy_error(s, o);
  v.action_diff = std::abs(orbit_action(s, o) - r.action);
  v.ok = v.residual <= 1e-10 && v.energy_error <= 1e-8 && v.action_diff <= 1e-10;
  return v;
}

Distinctness compare_orbits(const SurfaceModel& s, const OrbitRecord& a, const OrbitRecord& b, int k_max, double tol) {
  Distinctness d;
  d.a = a.label;
  d.b = b.label;
  const int per = 256;
  for (int dir : {1, -1}) {
    const OrbitRecord& p = dir == 1 ? a : b;
    const OrbitRecord& q = dir == 1 ? b : a;
    for (int k = 1; k <= k_max; ++k) {
      if (std::abs(q.orbit.T - k * p.orbit.T) > 1e-6 * q.orbit.T || q.orbit.winding != p.orbit.winding * k) continue;
      if (std::abs(q.action - k * p.action) > 1e-6 * (1.0 + std::abs(q.action))) continue;
      const double dist = aligned_distance(sampled(s, p.orbit, k, per), sampled(s, q.orbit, 1, k * per));
      if (d.distance < 0.0 || dist < d.distance) d.distance = dist;
      if (dist < tol) {
        d.distinct = false;
        d.k = dir * k;
        d.reason = k == 1 ? "same orbit up to time shift" : fmt::format("iterate, k = {}", k);
        return d;
      }
    }
    if (dir == 1 && a.label == b.label) break;
  }
  d.reason = d.distance < 0.0 ? "no period, winding and action match for k <= " + std::to_string(k_max)
                              : fmt::format("aligned distance {:.3g}", d.distance);
  return d;
}

OrbitRecord make_record(const SurfaceModel& s, const std::string& label, const Orbit& o, const ExperimentOptions& opt) {
  OrbitRecord r;
  r.label = label;
  r.orbit = o;
  r.action = orbit_action(s, o);
  IndexOptions io = opt.index;
  io.N = std::clamp(static_cast<int>(std::lround(opt.samples_per_time * o.T)), 64, 384);
  io.bott.workers = opt.workers;
  try {
    const IndexReport rep = analyze_orbit(s, o, io);
    r.i = rep.i;
    r.i_T = rep.i_T;
    r.mean_index = rep.mean_index;
    r.degenerate = rep.reduced.degenerate;
    r.shear = rep.reduced.shear;
    r.stability = to_string(rep.stability.cls);
    r.theorem_checked = rep.theorem_checked;
    r.theorem_holds = rep.theorem_holds;
  } catch (const NumericalError& e) {
    const PolishResult pol = polish_critical(s, orbit_to_loop(s, o, io.N), o.kappa);
    r.i = free_period_hessian_index(s, pol.loop, o.kappa).negative;
    r.i_T = fixed_period_index(s, pol.loop, o.kappa).negative;
    r.mean_index = mean_index(bott_function(s, pol.loop, o.kappa, Mat4::Identity(), io.bott));
    r.mean_from_monodromy = false;
    r.degenerate = true;
    r.stability = "unclassified";
    r.note = std::string("monodromy unavailable (") + e.what() + "); mean index from the uniform grid";
  }
  r.check = revalidate(s, r);
  return r;
}

RunReport three_orbit_run(const SurfaceModel& s, double kappa, const ExperimentOptions& opt) {
  check_subcritical(kappa, opt);
  RunReport rep;
  rep.kappa = kappa;
  std::optional<PathStage> st;
  try {
    st = build_stage(s, kappa, opt);
    rep.alpha = st->alpha_record;
  } catch (const NumericalError& e) {
    rep.errors.push_back(stage_error("alpha/mu", e));
  }
  if (st) {
    try {
      rep.alpha_barrier = strictness_barrier(s, st->a, kappa, opt.barrier_radius, opt.barrier);
    } catch (const NumericalError& e) {
      rep.errors.push_back(stage_error("barrier", e));
    }
    try {
      const MinimaxRecord rec = mountain_pass(s, kappa, st->u1, opt.beta_mp);
      rep.beta_value = rec.value;
      rep.beta_status = rec.status;
      if (rec.candidate)
        rep.beta = make_record(s, "beta", *rec.candidate, opt);
      else
        rep.errors.push_back("beta: mountain pass ended " + rec.status);
    } catch (const NumericalError& e) {
      rep.errors.push_back(stage_error("beta", e));
    }
  }
  if (auto g = gamma_search(s, kappa, opt.gamma, rep.gamma_origin, rep.errors)) rep.gamma = make_record(s, "gamma", *g, opt);

  std::vector<const OrbitRecord*> found;
  for (const auto* r : {&rep.alpha, &rep.beta, &rep.gamma})
    if (*r) found.push_back(&**r);
  for (size_t i = 0; i < found.size(); ++i)
    for (size_t j = i + 1; j < found.size(); ++j)
      rep.pairs.push_back(compare_orbits(s, *found[i], *found[j], opt.distinct_k_max, opt.distinct_tol));

  if (st && !opt.ladder.empty()) {
    try {
      rep.ladder = run_ladder(s, kappa, *st, opt.ladder, opt);
    } catch (const std::exception& e) {
      rep.errors.push_back(stage_error("ladder", e));
    }
  }
  for (const auto* r : found) rep.all_revalidated = rep.all_revalidated && r->check.ok;
  if (rep.ladder)
    for (const auto& e : rep.ladder->entries)
      if (e.beta) rep.all_revalidated = rep.all_revalidated && e.beta->check.ok;
  return rep;
}

InfinitudeReport infinitude_probe(const SurfaceModel& s, double kappa, const std::vector<int>& ladder,
                                  const ExperimentOptions& opt) {
  check_subcritical(kappa, opt);
  return run_ladder(s, kappa, build_stage(s, kappa, opt), ladder, opt);
}

std::vector<RunReport> run_grid(const SurfaceModel& s, const std::vector<double>& kappas, const ExperimentOptions& opt) {
  std::vector<double> ks = kappas;
  std::sort(ks.begin(), ks.end());
  ExperimentOptions inner = opt;
  if (ks.size() > 1) inner.workers = 1;
  std::vector<RunReport> out(ks.size());
  parallel_for(static_cast<int>(ks.size()), ks.size() > 1 ? opt.workers : 1,
               [&](int k) { out[k] = three_orbit_run(s, ks[k], inner); });
  return out;
}

nlohmann::json record_to_json(const OrbitRecord& r) {
  nlohmann::json j;
  j["label"] = r.label;
  j["orbit"] = orbit_to_json(r.orbit);
  j["action"] = r.action;
  j["i"] = r.i;
  j["i_T"] = r.i_T;
  j["mean_index"] = r.mean_index;
  j["mean_from_monodromy"] = r.mean_from_monodromy;
  j["degenerate"] = r.degenerate;
  j["shear"] = r.shear;
  j["stability"] = r.stability;
  j["theorem_checked"] = r.theorem_checked;
  j["theorem_holds"] = r.theorem_holds;
  j["note"] = r.note;
  j["revalidation"] = {{"residual", r.check.residual},
                       {"energy_error", r.check.energy_error},
                       {"action_diff", r.check.action_diff},
                       {"ok", r.check.ok}};
  return j;
}

nlohmann::json distinctness_to_json(const Distinctness& d) {
  return {{"a", d.a}, {"b", d.b}, {"distinct", d.distinct}, {"k", d.k}, {"distance", d.distance}, {"reason", d.reason}};
}

nlohmann::json infinitude_to_json(const InfinitudeReport& r) {
  nlohmann::json j;
  j["kappa"] = r.kappa;
  auto es = nlohmann::json::array();
  for (const auto& e : r.entries) {
    nlohmann::json x = {{"n", e.n},       {"q", e.q},           {"bangert_max", e.bangert_max},
                        {"bangert_bound", e.bangert_bound}, {"A", e.A}, {"status", e.status},
                        {"error", e.error}};
    x["beta"] = e.beta ? record_to_json(*e.beta) : nlohmann::json(nullptr);
    es.push_back(x);
  }
  j["entries"] = es;
  auto ps = nlohmann::json::array();
  for (const auto& p : r.pairs) ps.push_back(distinctness_to_json(p));
  j["pairs"] = ps;
  j["q_decreasing"] = r.q_decreasing;
  j["mean_positive"] = r.mean_positive;
  j["iterate_scaling"] = r.iterate_scaling;
  j["no_zero_mean_root"] = r.no_zero_mean_root;
  j["notes"] = r.notes;
  return j;
}

nlohmann::json run_report_to_json(const RunReport& r) {
  auto opt = [](const std::optional<OrbitRecord>& o) { return o ? record_to_json(*o) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["kappa"] = r.kappa;
  j["alpha"] = opt(r.alpha);
  j["beta"] = opt(r.beta);
  j["gamma"] = opt(r.gamma);
  j["alpha_barrier"] = r.alpha_barrier;
  j["beta_value"] = r.beta_value;
  j["beta_status"] = r.beta_status;
  j["gamma_origin"] = r.gamma_origin;
  auto ps = nlohmann::json::array();
  for (const auto& p : r.pairs) ps.push_back(distinctness_to_json(p));
  j["pairs"] = ps;
  j["ladder"] = r.ladder ? infinitude_to_json(*r.ladder) : nlohmann::json(nullptr);
  j["errors"] = r.errors;
  j["all_revalidated"] = r.all_revalidated;
  return j;
}

void write_summary_csv(std::ostream& out, const std::vector<RunReport>& runs) {
  out << "kappa,orbits,alpha_S,beta_S,gamma_S,alpha_i,beta_i,gamma_i,alpha_class,beta_class,gamma_class,distinct\n";
  for (const auto& r : runs) {
    const std::optional<OrbitRecord>* os[3] = {&r.alpha, &r.beta, &r.gamma};
    int count = 0;
    for (auto* o : os) count += o->has_value();
    bool distinct = true;
    for (const auto& p : r.pairs) distinct = distinct && p.distinct;
    out << fmt::format("{:.10g},{}", r.kappa, count);
    for (auto* o : os) out << (*o ? fmt::format(",{:.10g}", (*o)->action) : std::string(","));
    for (auto* o : os) out << (*o ? fmt::format(",{}", (*o)->i) : std::string(","));
    for (auto* o : os) out << "," << (*o ? (*o)->stability : std::string());
    out << "," << (distinct ? 1 : 0) << "\n";
  }
}

}  // namespace maglab
