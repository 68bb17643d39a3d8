#include "maglab/minimax.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "maglab/errors.hpp"
#include "maglab/localmin.hpp"

namespace maglab {

namespace {
constexpr double kPi = std::numbers::pi;

Curve point_curve(const Vec2& p) {
  Curve c;
  c.x = {p};
  return c;
}

// Restriction of a polyline curve to the time window [a, b].
Curve sub_curve(const Curve& c, double a, double b) {
  const double D = c.duration();
  a = std::clamp(a, 0.0, D);
  b = std::clamp(b, 0.0, D);
  auto at = [&](double t) {
    double t0 = 0.0;
    for (size_t j = 0; j < c.dt.size(); ++j) {
      if (t <= t0 + c.dt[j] || j + 1 == c.dt.size()) {
        const double r = std::clamp((t - t0) / c.dt[j], 0.0, 1.0);
        return Vec2((1.0 - r) * c.x[j] + r * c.x[j + 1]);
      }
      t0 += c.dt[j];
    }
    return c.x.front();
  };
  Curve out = point_curve(at(a));
  if (b - a <= 1e-12 * std::max(1.0, D)) return out;
  double t0 = 0.0;
  for (size_t j = 0; j < c.dt.size(); ++j) {
    const double t1 = t0 + c.dt[j];
    if (t1 > a + 1e-12 && t1 < b - 1e-12) {
      out.x.push_back(c.x[j + 1]);
      out.dt.push_back(t1 - std::max(t0, a));
    }
    t0 = t1;
  }
  const double last = out.dt.empty() ? b - a : b - (a + out.duration());
  out.x.push_back(at(b));
  out.dt.push_back(last);
  return out;
}

Curve iterate_curve(const Loop& l, int n) { return n <= 0 ? point_curve(l.x[0]) : to_curve(iterate(l, n)); }

Curve join(std::initializer_list<Curve> parts) {
  Curve c;
  for (const auto& p : parts) c = juxtapose(c, p);
  return c;
}

LoopTangent difference(const Loop& a, const Loop& b) {
  LoopTangent t = LoopTangent::zero(a.size());
  for (int j = 0; j < a.size(); ++j) t.xi[j] = b.x[j] - a.x[j];
  t.tau = b.T - a.T;
  return t;
}

double inner(const SurfaceModel& s, const Loop& l, const LoopTangent& a, const LoopTangent& b) {
  return a.tau * b.tau + phi_weight(l.T) * h1_inner(s, l, a.xi, b.xi);
}
}  // namespace

void LoopPath::validate() const {
  if (nodes.size() < 2) throw ConfigError("path: needs at least two nodes");
  for (const auto& l : nodes) {
    l.validate();
    if (l.winding != nodes.front().winding) throw ConfigError("path: nodes lie in different homotopy classes");
  }
}

std::vector<double> path_actions(const SurfaceModel& s, const LoopPath& p, double kappa) {
  std::vector<double> out;
  out.reserve(p.nodes.size());
  for (const auto& l : p.nodes) out.push_back(action(s, l, kappa));
  return out;
}

double loop_distance(const SurfaceModel& s, const Loop& a, const Loop& b, int n) {
  if (a.winding != b.winding) return std::numeric_limits<double>::infinity();
  const Loop ra = resample_uniform(a, n), rb = resample_uniform(b, n);
  return metric_norm(s, ra, difference(ra, rb));
}

Loop blend(const Loop& a, const Loop& b, double t) {
  if (a.size() != b.size() || a.winding != b.winding || !a.uniform() || !b.uniform())
    throw ConfigError("blend: loops need equal uniform sampling and winding");
  Loop out = a;
  for (int j = 0; j < a.size(); ++j) out.x[j] = (1.0 - t) * a.x[j] + t * b.x[j];
  out.T = (1.0 - t) * a.T + t * b.T;
  return out;
}

LoopPath linear_path(const Loop& a, const Loop& b, int m) {
  LoopPath p;
  for (int i = 0; i <= m; ++i) p.nodes.push_back(blend(a, b, static_cast<double>(i) / m));
  p.nodes.front() = a;
  p.nodes.back() = b;
  return p;
}

LoopPath iterate_path(const LoopPath& p, int n) {
  LoopPath out = p;
  for (auto& l : out.nodes) l = iterate(l, n);
  return out;
}

Loop deep_loop(const SurfaceModel& s, double kappa, const Loop& cls, const DeepLoopOptions& opt) {
  const double target = action(s, cls, kappa) - opt.margin;
  const Vec2 base = cls.x[0];
  Vec2 dir = cls.node(1) - cls.x[0];
  dir = dir.norm() > 0.0 ? Vec2(dir.normalized()) : Vec2(1.0, 0.0);
  const Vec2 nrm(-dir.y(), dir.x());
  const double speed = std::sqrt(2.0 * kappa);
  const int M = std::max(16, opt.N / 2);

  DescentOptions dopt;
  dopt.action_floor = target;
  dopt.max_iter = opt.max_iter;
  dopt.T_max = 1e3;
  dopt.newton_switch = 0.0;
  dopt.record_trace = false;

  double best = std::numeric_limits<double>::infinity();
  for (double R : opt.radii)
    for (double aspect : opt.aspects)
      for (int side : {1, -1})
        for (int sense : {1, -1}) {
          Curve e = point_curve(base);
          for (int k = 1; k <= M; ++k) {
            const double ph = 2.0 * kPi * k / M;
            const Vec2 p = base + R * aspect * sense * std::sin(ph) * dir + R * side * (1.0 - std::cos(ph)) * nrm;
            const Vec2 mid = 0.5 * (p + e.x.back());
            const double len = std::sqrt(eval_point(s, mid).G) * (p - e.x.back()).norm();
            e.x.push_back(k == M ? base : p);
            e.dt.push_back(std::max(len, 1e-9) / speed);
          }
          const Loop seed = resample_uniform(to_loop(juxtapose(to_curve(cls), e)), opt.N);
          if (action(s, seed, kappa) < target) return seed;
          const DescentResult r = descend(s, seed, kappa, dopt);
          if (r.action < target) return r.loop;
          best = std::min(best, r.action);
        }
  throw NumericalError("not-found",
                       fmt::format("no loop below action {:.6g} (best {:.6g}); kappa may be above c_u", target, best));
}

BangertPath build_bangert_path(const SurfaceModel& s, double kappa, const Loop& mu0, const Loop& mu1,
                               const LoopPath& u1, int n, const BangertOptions& opt) {
  u1.validate();
  if (n < 1) throw ConfigError("bangert: n must be at least 1");
  if (mu0.winding != u1.nodes.front().winding || mu1.winding != u1.nodes.back().winding)
    throw ConfigError("bangert: endpoint loops are not in the class of the path");
  auto same = [](const Loop& a, const Loop& b) {
    if (a.size() != b.size() || std::abs(a.T - b.T) > 1e-12) return false;
    for (int j = 0; j < a.size(); ++j)
      if ((a.x[j] - b.x[j]).norm() > 1e-12) return false;
    return true;
  };
  if (!same(mu0, u1.nodes.front()) || !same(mu1, u1.nodes.back()))
    throw ConfigError("bangert: the path must start at mu0 and end at mu1");
  for (const auto& l : u1.nodes)
    if (l.size() != mu0.size() || !l.uniform()) throw ConfigError("bangert: path loops need equal uniform sampling");

  const int m = u1.size() - 1;
  Curve tau = point_curve(u1.nodes[0].x[0]);
  for (int i = 1; i <= m; ++i) {
    Vec2 p = u1.nodes[i].x[0];
    const Vec2 gap = p - tau.x.back();
    p -= Vec2(std::round(gap.x()), std::round(gap.y()));
    tau.x.push_back(p);
    tau.dt.push_back(1.0 / m);
  }
  const Curve tau_hat = reversed(tau);

  auto gamma = [&](double sg) {
    const double q = std::clamp(sg, 0.0, 1.0) * m;
    const int i = std::min(static_cast<int>(std::floor(q)), m - 1);
    return blend(u1.nodes[i], u1.nodes[i + 1], q - i);
  };
  auto center = [&](int h, double sg) {
    return to_loop(join({iterate_curve(mu0, h), sub_curve(tau, 0.0, sg), to_curve(gamma(sg)), sub_curve(tau, sg, 1.0),
                         iterate_curve(mu1, n - h - 1), tau_hat}));
  };
  auto grow = [&](double r) {
    const Curve hair = sub_curve(tau, 0.0, r);
    return to_loop(join({iterate_curve(mu0, n), hair, reversed(hair)}));
  };
  auto retract = [&](double r) {
    const Curve hair = sub_curve(tau, r, 1.0);
    return to_loop(join({hair, iterate_curve(mu1, n), reversed(hair)}));
  };

  BangertPath out;
  std::vector<double> s_used;
  auto add_stage = [&](const std::function<Loop(double)>& f, std::vector<double> params, bool skip_first,
                       bool track_s) {
    const double min_width = std::ldexp((params.back() - params.front()) / (params.size() - 1), -opt.max_refine);
    std::vector<Loop> loops;
    for (double p : params) loops.push_back(f(p));
    for (size_t i = 0; i + 1 < loops.size();) {
      const int nc = std::max(loops[i].size(), loops[i + 1].size());
      const double gap = loop_distance(s, loops[i], loops[i + 1], nc);
      const double width = params[i + 1] - params[i];
      if (gap > opt.mesh_bound && width > 1.5 * min_width) {
        const double mid = 0.5 * (params[i] + params[i + 1]);
        params.insert(params.begin() + i + 1, mid);
        loops.insert(loops.begin() + i + 1, f(mid));
      } else {
        ++i;
      }
    }
    for (size_t i = skip_first ? 1 : 0; i < loops.size(); ++i) out.path.nodes.push_back(std::move(loops[i]));
    if (track_s) s_used.insert(s_used.end(), params.begin(), params.end());
  };

  std::vector<double> mesh(m + 1);
  for (int i = 0; i <= m; ++i) mesh[i] = static_cast<double>(i) / m;

  if (n == 1) {
    out.path = u1;
    s_used = mesh;
  } else {
    std::vector<double> hair(opt.hair_nodes + 1);
    for (int i = 0; i <= opt.hair_nodes; ++i) hair[i] = static_cast<double>(i) / opt.hair_nodes;
    add_stage(grow, hair, false, false);
    for (int h = n - 1; h >= 0; --h) add_stage([&](double sg) { return center(h, sg); }, mesh, true, true);
    add_stage(retract, hair, true, false);
  }

  out.actions = path_actions(s, out.path, kappa);
  out.max_action = *std::max_element(out.actions.begin(), out.actions.end());

  // sup over s of S(tau|[0,s]) and S(gamma_s) on a fine grid plus every parameter used
  std::vector<double> grid = s_used;
  for (int i = 0; i <= 16 * m; ++i) grid.push_back(static_cast<double>(i) / (16 * m));
  double sup_tau = -std::numeric_limits<double>::infinity(), sup_gamma = sup_tau;
  for (double sg : grid) {
    sup_tau = std::max(sup_tau, curve_action(s, sub_curve(tau, 0.0, sg), kappa));
    sup_gamma = std::max(sup_gamma, action(s, gamma(sg), kappa));
  }
  const double S0 = action(s, mu0, kappa), S1 = action(s, mu1, kappa);
  out.A_terms[0] = -std::min(S0, S1);
  out.A_terms[1] = sup_tau;
  out.A_terms[2] = curve_action(s, tau_hat, kappa);
  out.A_terms[3] = sup_gamma;
  out.A = out.A_terms[0] + out.A_terms[1] + out.A_terms[2] + out.A_terms[3];
  out.bound = n * std::max(S0, S1) + out.A;
  return out;
}

namespace {
// Redistributes the nodes between fixed indices lo < hi evenly in arc length.
void equidistribute(const SurfaceModel& s, std::vector<Loop>& nodes, int lo, int hi) {
  if (hi - lo < 2) return;
  std::vector<double> arc(hi - lo + 1, 0.0);
  for (int i = lo + 1; i <= hi; ++i)
    arc[i - lo] = arc[i - lo - 1] + metric_norm(s, nodes[i - 1], difference(nodes[i - 1], nodes[i]));
  const double L = arc.back();
  if (!(L > 0.0)) return;
  std::vector<Loop> fresh;
  int seg = 0;
  for (int i = lo + 1; i < hi; ++i) {
    const double target = L * (i - lo) / (hi - lo);
    while (seg + 1 < hi - lo && arc[seg + 1] < target) ++seg;
    const double len = arc[seg + 1] - arc[seg];
    const double r = len > 0.0 ? (target - arc[seg]) / len : 0.0;
    fresh.push_back(blend(nodes[lo + seg], nodes[lo + seg + 1], std::clamp(r, 0.0, 1.0)));
  }
  for (int i = lo + 1; i < hi; ++i) nodes[i] = std::move(fresh[i - lo - 1]);
}

// Largest step along t keeping every sample within `radius` and the period within 10%.
double trust_step(const Loop& l, const LoopTangent& t, double radius) {
  double big = std::abs(t.tau) / (0.1 * l.T);
  for (const auto& v : t.xi) big = std::max(big, v.norm() / radius);
  return big > 0.0 ? 1.0 / big : std::numeric_limits<double>::infinity();
}

// Moves each node by a lattice vector so the path stays continuous on the cover.
void unwrap_interior(std::vector<Loop>& nodes) {
  for (size_t i = 1; i + 1 < nodes.size(); ++i) {
    const Vec2 d = nodes[i - 1].x[0] - nodes[i].x[0];
    const Vec2 L(std::round(d.x()), std::round(d.y()));
    if (L.isZero()) continue;
    for (auto& p : nodes[i].x) p += L;
  }
}

int first_argmax(const std::vector<double>& v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}
}  // namespace

MinimaxRecord mountain_pass(const SurfaceModel& s, double kappa, const LoopPath& path, const MountainPassOptions& opt) {
  path.validate();
  if (opt.nodes < 3) throw ConfigError("mountain_pass: needs at least three nodes");
  int N = opt.N;
  if (N <= 0)
    for (const auto& l : path.nodes) N = std::max(N, l.size());

  std::vector<Loop> nodes;
  for (const auto& l : path.nodes) nodes.push_back(l.uniform() && l.size() == N ? l : resample_uniform(l, N));
  {
    // resample the path itself to opt.nodes nodes, evenly in arc length
    std::vector<double> arc(nodes.size(), 0.0);
    for (size_t i = 1; i < nodes.size(); ++i)
      arc[i] = arc[i - 1] + metric_norm(s, nodes[i - 1], difference(nodes[i - 1], nodes[i]));
    std::vector<Loop> fresh{nodes.front()};
    size_t seg = 0;
    for (int i = 1; i + 1 < opt.nodes; ++i) {
      const double target = arc.back() * i / (opt.nodes - 1);
      while (seg + 2 < nodes.size() && arc[seg + 1] < target) ++seg;
      const double len = arc[seg + 1] - arc[seg];
      fresh.push_back(blend(nodes[seg], nodes[seg + 1], len > 0.0 ? std::clamp((target - arc[seg]) / len, 0.0, 1.0) : 0.0));
    }
    fresh.push_back(nodes.back());
    nodes = std::move(fresh);
  }
  const int m = static_cast<int>(nodes.size()) - 1;

  MinimaxRecord rec;
  rec.kappa = kappa;
  rec.n = 1;
  rec.value = std::numeric_limits<double>::infinity();
  std::vector<double> S(m + 1);
  for (int i = 0; i <= m; ++i) S[i] = action(s, nodes[i], kappa);
  rec.endpoint_level = std::max(S.front(), S.back());
  std::vector<double> step(m + 1, opt.step0);
  double climb_step = opt.step0;
  int next_newton = 0;

  for (int it = 0;; ++it) {
    std::vector<LoopTangent> g(m + 1);
    std::vector<double> gn(m + 1, 0.0);
    for (int i = 1; i < m; ++i) {
      g[i] = grad_action(s, nodes[i], kappa);
      gn[i] = metric_norm(s, nodes[i], g[i]);
    }
    const int top = first_argmax(S);
    rec.argmax = top;
    // the discrete path is piecewise linear between nodes; its maximum includes the midpoints
    double pmax = S[top];
    for (int i = 0; i < m; ++i) pmax = std::max(pmax, action(s, blend(nodes[i], nodes[i + 1], 0.5), kappa));
    rec.max_trace.push_back(pmax);
    rec.value = std::min(rec.value, pmax);
    rec.value_trace.push_back(rec.value);
    rec.top_grad = gn[top];
    rec.iterations = it;
    if (top == 0 || top == m || S[top] <= rec.endpoint_level + 1e-12) {
      rec.degenerate = true;
      rec.status = "degenerate";
      break;
    }
    if (gn[top] < opt.grad_tol) {
      rec.captured = true;
      rec.status = "captured";
      break;
    }
    const bool climbing = it >= opt.climb_after;
    if (climbing && gn[top] < opt.newton_capture && it >= next_newton) {
      next_newton = it + 25;
      const PolishResult p = polish_critical(s, nodes[top], kappa);
      if (p.converged && std::abs(action(s, p.loop, kappa) - S[top]) < 10.0 * gn[top] * gn[top] + 1e-6 &&
          free_period_hessian_index(s, p.loop, kappa).negative == 1) {
        nodes[top] = p.loop;
        S[top] = action(s, p.loop, kappa);
        rec.critical_loop = p.loop;
        rec.captured = true;
        rec.status = "captured";
        rec.top_grad = p.grad_norm;
        break;
      }
    }
    if (it >= opt.max_iter) {
      rec.status = "budget-exhausted";
      break;
    }

    std::vector<Loop> next = nodes;
    std::vector<double> nextS = S;
    for (int i = 1; i < m; ++i) {
      if (climbing && i == top) continue;
      if (S[i] <= rec.endpoint_level) continue;  // the deformation vanishes below the endpoint level
      const double g2 = gn[i] * gn[i];
      for (int ls = 0; ls < 30; ++ls) {
        step[i] = std::min(step[i], trust_step(nodes[i], g[i], opt.trust_radius));
        const Loop trial = apply(nodes[i], g[i], -step[i]);
        if (trial.T > 0.0) {
          const double St = action(s, trial, kappa);
          if (St <= S[i] - 1e-4 * step[i] * g2) {
            next[i] = trial;
            nextS[i] = St;
            step[i] = std::min(step[i] * 1.5, 10.0);
            break;
          }
        }
        step[i] *= 0.5;
      }
    }
    if (climbing) {
      LoopTangent t = difference(nodes[top - 1], nodes[top + 1]);
      const double tn = metric_norm(s, nodes[top], t);
      if (tn > 0.0) {
        t = t * (1.0 / tn);
        LoopTangent dir = g[top] * -1.0;
        dir += t * (2.0 * inner(s, nodes[top], g[top], t));
        for (int ls = 0; ls < 30; ++ls) {
          climb_step = std::min(climb_step, trust_step(nodes[top], dir, opt.trust_radius));
          const Loop trial = apply(nodes[top], dir, climb_step);
          if (trial.T > 0.0 && metric_norm(s, trial, grad_action(s, trial, kappa)) < gn[top]) {
            next[top] = trial;
            nextS[top] = action(s, trial, kappa);
            climb_step = std::min(climb_step * 1.3, 10.0);
            break;
          }
          climb_step *= 0.5;
        }
      }
    }
    nodes = std::move(next);
    S = std::move(nextS);
    unwrap_interior(nodes);
    if (climbing) {
      equidistribute(s, nodes, 0, top);
      equidistribute(s, nodes, top, m);
    } else {
      equidistribute(s, nodes, 0, m);
    }
    for (int i = 1; i < m; ++i) S[i] = action(s, nodes[i], kappa);
  }

  rec.final_actions = S;
  rec.final_path.nodes = nodes;
  if (rec.captured && opt.refine) {
    if (!rec.critical_loop) {
      const PolishResult p = polish_critical(s, nodes[rec.argmax], kappa);
      if (p.converged) rec.critical_loop = p.loop;
    }
    if (rec.critical_loop) {
      rec.candidate_action = action(s, *rec.critical_loop, kappa);
      rec.index = free_period_hessian_index(s, *rec.critical_loop, kappa).negative;
      rec.index_T = fixed_period_index(s, *rec.critical_loop, kappa).negative;
      try {
        rec.candidate = refine_orbit(s, *rec.critical_loop, kappa, opt.refine_opt, &rec.refine_steps);
      } catch (const NumericalError& e) {
        rec.status = "refine-failed: " + e.kind;
      }
    } else {
      rec.status = "polish-failed";
    }
  }
  return rec;
}

std::vector<double> shared_values(const SurfaceModel& s, const std::vector<LoopPath>& paths,
                                  const std::vector<double>& kappas) {
  std::vector<double> out;
  for (double k : kappas) {
    double v = std::numeric_limits<double>::infinity();
    for (const auto& p : paths) {
      const auto a = path_actions(s, p, k);
      v = std::min(v, *std::max_element(a.begin(), a.end()));
    }
    out.push_back(v);
  }
  return out;
}

nlohmann::json record_to_json(const MinimaxRecord& r) {
  nlohmann::json j = {{"kappa", r.kappa},
                      {"n", r.n},
                      {"value", r.value},
                      {"argmax", r.argmax},
                      {"value_trace", r.value_trace},
                      {"max_trace", r.max_trace},
                      {"final_actions", r.final_actions},
                      {"endpoint_level", r.endpoint_level},
                      {"top_grad", r.top_grad},
                      {"iterations", r.iterations},
                      {"captured", r.captured},
                      {"degenerate", r.degenerate},
                      {"status", r.status},
                      {"index", r.index},
                      {"index_T", r.index_T},
                      {"candidate_action", r.candidate_action},
                      {"refine_steps", r.refine_steps}};
  j["candidate"] = r.candidate ? orbit_to_json(*r.candidate) : nlohmann::json(nullptr);
  return j;
}

}  // namespace maglab
