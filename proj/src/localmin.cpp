#include "maglab/localmin.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Cholesky>

#include "maglab/errors.hpp"
#include "maglab/minimax.hpp"

namespace maglab {

namespace {
constexpr double kPi = std::numbers::pi;

Eigen::VectorXd flatten(const LoopTangent& t) {
  const int n = static_cast<int>(t.xi.size());
  Eigen::VectorXd v(2 * n + 1);
  for (int j = 0; j < n; ++j) v.segment<2>(2 * j) = t.xi[j];
  v[2 * n] = t.tau;
  return v;
}

LoopTangent unflatten(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size() - 1) / 2;
  LoopTangent t = LoopTangent::zero(n);
  for (int j = 0; j < n; ++j) t.xi[j] = v.segment<2>(2 * j);
  t.tau = v[2 * n];
  return t;
}

Eigen::VectorXd velocity_direction(const Loop& l) {
  const int n = l.size();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(2 * n + 1);
  for (int j = 0; j < n; ++j) {
    const Vec2 prev = j == 0 ? l.x[n - 1] - l.winding.cast<double>() : l.x[j - 1];
    d.segment<2>(2 * j) = 0.5 * (l.node(j + 1) - prev);
  }
  return d;
}
}  // namespace

std::string to_string(DescentStatus s) {
  switch (s) {
    case DescentStatus::Minimizer: return "Minimizer";
    case DescentStatus::CollapsedToPoint: return "CollapsedToPoint";
    case DescentStatus::MaxIter: return "MaxIter";
    case DescentStatus::Unbounded: return "Unbounded";
  }
  return "?";
}

Loop smooth_project(const SurfaceModel& s, const Loop& l0, double kappa, int h) {
  const int n = l0.size();
  if (h < 1 || h > n) throw ConfigError("smooth_project: subdivision count must lie in [1, N]");
  std::vector<int> brk(h + 1);
  for (int k = 0; k <= h; ++k) brk[k] = static_cast<int>(std::lround(static_cast<double>(k) * n / h));
  Loop l = l0;
  double S = action(s, l, kappa);
  for (int it = 0; it < 50; ++it) {
    const LoopTangent d = action_differential(s, l, kappa);
    const auto cells = cell_hessians(s, l, kappa);
    std::vector<Vec2> step(n, Vec2::Zero());
    double gmax = 0.0;
    for (int k = 0; k < h; ++k) {
      const int b = brk[k], e = brk[k + 1];
      const int m = e - b - 1;  // interior nodes
      if (m <= 0) continue;
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * m, 2 * m);
      Eigen::VectorXd g(2 * m);
      for (int i = 0; i < m; ++i) {
        g.segment<2>(2 * i) = d.xi[b + 1 + i];
        gmax = std::max(gmax, d.xi[b + 1 + i].cwiseAbs().maxCoeff());
      }
      for (int c = b; c < e; ++c) {
        const int ia = c - b - 1, ib = c - b;  // local indices of the cell's ends
        const bool a_in = ia >= 0, b_in = ib < m;
        const Eigen::Matrix4d& H = cells[c].H;
        if (a_in) A.block<2, 2>(2 * ia, 2 * ia) += H.block<2, 2>(0, 0);
        if (b_in) A.block<2, 2>(2 * ib, 2 * ib) += H.block<2, 2>(2, 2);
        if (a_in && b_in) {
          A.block<2, 2>(2 * ia, 2 * ib) += H.block<2, 2>(0, 2);
          A.block<2, 2>(2 * ib, 2 * ia) += H.block<2, 2>(2, 0);
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(A);
      if (llt.info() != Eigen::Success)
        throw NumericalError("h-too-small", "arc boundary value problem is not locally convex");
      const Eigen::VectorXd delta = llt.solve(g);
      for (int i = 0; i < m; ++i) step[b + 1 + i] = -delta.segment<2>(2 * i);
    }
    if (gmax < 1e-13) break;
    double a = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls, a *= 0.5) {
      Loop trial = l;
      for (int j = 0; j < n; ++j) trial.x[j] += a * step[j];
      const double St = action(s, trial, kappa);
      if (St <= S) {
        l = std::move(trial);
        S = St;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no further decrease in floating point
    if (it == 49 && gmax > 1e-8) throw NumericalError("h-too-small", "arc boundary value problem did not converge");
  }
  return l;
}

DescentResult descend(const SurfaceModel& s, const Loop& seed, double kappa, const DescentOptions& opt) {
  if (!(kappa > 0.0)) throw ConfigError("descend: kappa must be positive");
  DescentResult r;
  Loop l = seed;
  double S = action(s, l, kappa);
  LoopTangent g = grad_action(s, l, kappa);
  double gn = metric_norm(s, l, g);
  double a = 1.0, aT = 1.0;
  const int n = l.size();
  const int arcs = (opt.smooth_cells > 0 && n % opt.smooth_cells == 0) ? n / opt.smooth_cells : 0;
  auto finish = [&](DescentStatus st) {
    r.status = st;
    r.loop = l;
    r.action = S;
    r.grad_norm = gn;
    return r;
  };
  for (r.iterations = 0; r.iterations < opt.max_iter; ++r.iterations) {
    if (gn < opt.grad_tol) return finish(DescentStatus::Minimizer);
    if (l.T < opt.T_min && std::abs(S) < opt.action_tol) return finish(DescentStatus::CollapsedToPoint);
    if (S < opt.action_floor || l.T > opt.T_max) return finish(DescentStatus::Unbounded);

    if (gn < opt.newton_switch) {
      const PolishResult p = polish_critical(s, l, kappa, opt.grad_tol * 1e-3, 20);
      if (p.converged) {
        const double Sp = action(s, p.loop, kappa);
        if (Sp <= S + 1e-12 * (1.0 + std::abs(S)) && free_period_hessian_index(s, p.loop, kappa).negative == 0) {
          l = p.loop;
          S = std::min(S, Sp);
          gn = p.grad_norm;
          if (opt.record_trace) r.trace.push_back(S);
          return finish(DescentStatus::Minimizer);
        }
      }
    }

    // Armijo backtracking along -grad
    bool accepted = false;
    a = std::min(a * 2.0, 1e4);
    for (int ls = 0; ls < 60; ++ls, a *= 0.5) {
      Loop trial = apply(l, g, -a);
      if (!(trial.T > 0.0)) continue;
      const double St = action(s, trial, kappa);
      if (std::isfinite(St) && St <= S - 1e-4 * a * gn * gn) {
        l = std::move(trial);
        S = St;
        accepted = true;
        break;
      }
    }
    // The metric is block diagonal in (x, T), so a step along the T component of the
    // gradient alone is also a descent step. It matters near point curves, where the
    // x block limits the joint step while S is essentially kappa T.
    aT = std::min(aT * 2.0, 1e4);
    const double dT = period_derivative(s, l, kappa);
    for (int ls = 0; ls < 60; ++ls, aT *= 0.5) {
      Loop trial = l;
      trial.T -= aT * dT;
      if (!(trial.T > 0.0)) continue;
      const double St = action(s, trial, kappa);
      if (std::isfinite(St) && St <= S - 1e-4 * aT * dT * dT) {
        l = std::move(trial);
        S = St;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (arcs > 0 && opt.smooth_every > 0 && (r.iterations + 1) % opt.smooth_every == 0) {
      try {
        l = smooth_project(s, l, kappa, arcs);
        S = action(s, l, kappa);
      } catch (const NumericalError&) {
        // arcs too long for the boundary value problem; keep the plain descent step
      }
    }
    if (opt.record_trace) r.trace.push_back(S);
    g = grad_action(s, l, kappa);
    gn = metric_norm(s, l, g);
  }
  if (gn < opt.grad_tol) return finish(DescentStatus::Minimizer);
  return finish(DescentStatus::MaxIter);
}

std::vector<Loop> seed_loops(const SurfaceModel& s, double kappa, const SeedFamily& fam) {
  std::vector<Loop> out;
  const double c = std::sqrt(2 * kappa);
  auto add_periods = [&](Loop base) {
    base.T = 1.0;
    const double len = loop_length(s, base);
    for (double f : fam.period_factors) {
      Loop l = base;
      l.T = std::max(1e-2, f * len / c);
      out.push_back(std::move(l));
    }
  };
  const int N = fam.N;
  for (int ir = 0; ir < fam.radii; ++ir) {
    const double r = 0.05 * (ir + 1);
    for (int cx = 0; cx < fam.centers_per_side; ++cx)
      for (int cy = 0; cy < fam.centers_per_side; ++cy) {
        const Vec2 ctr((cx + 0.5) / fam.centers_per_side, (cy + 0.5) / fam.centers_per_side);
        for (int o = 0; o < (fam.both_orientations ? 2 : 1); ++o) {
          Loop l;
          const double sgn = o == 0 ? 1.0 : -1.0;
          for (int j = 0; j < N; ++j) {
            const double t = 2 * kPi * j / N;
            l.x.push_back(ctr + r * Vec2(std::cos(t), sgn * std::sin(t)));
          }
          add_periods(l);
        }
      }
  }
  for (const Vec2i& w : fam.windings) {
    Loop l;
    l.winding = w;
    const Vec2 offset = Vec2(w.y() != 0 ? 0.1 : 0.0, w.x() != 0 ? 0.1 : 0.0);
    for (int j = 0; j < N; ++j) l.x.push_back(offset + w.cast<double>() * (static_cast<double>(j) / N));
    add_periods(l);
  }
  return out;
}

AlphaResult find_alpha(const SurfaceModel& s, double kappa, const SeedFamily& fam, const DescentOptions& opt) {
  DescentOptions scan = opt;
  scan.max_iter = fam.scan_max_iter;
  scan.action_floor = std::max(opt.action_floor, fam.scan_action_floor);
  scan.record_trace = false;
  const auto seeds = seed_loops(s, kappa, fam);
  AlphaResult res;
  int best = -1;
  Loop best_loop;
  double best_S = 0.0;
  for (size_t k = 0; k < seeds.size(); ++k) {
    const DescentResult d = descend(s, seeds[k], kappa, scan);
    res.outcomes.push_back({static_cast<int>(k), seeds[k].winding, d.status, d.action});
    if (d.status == DescentStatus::Minimizer && d.action < 0.0 && (best < 0 || d.action < best_S - 1e-9)) {
      best = static_cast<int>(k);
      best_S = d.action;
      best_loop = d.loop;
    }
  }
  if (best < 0) {
    int counts[4] = {0, 0, 0, 0};
    for (const auto& o : res.outcomes) ++counts[static_cast<int>(o.status)];
    throw NumericalError("not-found",
                         "no negative-action minimizer among " + std::to_string(seeds.size()) +
                             " seeds (minimizers " + std::to_string(counts[0]) + ", collapsed " +
                             std::to_string(counts[1]) + ", max-iter " + std::to_string(counts[2]) +
                             ", unbounded " + std::to_string(counts[3]) + ")");
  }
  res.orbit = refine_orbit(s, best_loop, kappa);
  const PolishResult p = polish_critical(s, orbit_to_loop(s, res.orbit, fam.N_final), kappa);
  res.loop = p.loop;
  res.action = orbit_action(s, res.orbit);
  res.index = free_period_hessian_index(s, res.loop, kappa).negative;
  res.index_T = fixed_period_index(s, res.loop, kappa).negative;
  return res;
}

double strictness_barrier(const SurfaceModel& s, const Loop& l, double kappa, double radius,
                          const BarrierOptions& opt) {
  const int n = l.size();
  const double S0 = action(s, l, kappa);
  const Eigen::MatrixXd G = metric_matrix(s, l);
  Eigen::VectorXd d = velocity_direction(l);
  d /= std::sqrt(d.dot(G * d));
  const Eigen::VectorXd Gd = G * d;
  auto project = [&](Eigen::VectorXd v) {
    v -= d * Gd.dot(v);
    return Eigen::VectorXd(v / std::sqrt(v.dot(G * v)));
  };
  auto value = [&](const Eigen::VectorXd& xi) { return action(s, apply(l, unflatten(xi), radius), kappa); };
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> N01(0.0, 1.0);
  double best = std::numeric_limits<double>::infinity();
  for (int p = 0; p < opt.probes; ++p) {
    Eigen::VectorXd xi(2 * n + 1);
    for (int k = 0; k < xi.size(); ++k) xi[k] = N01(rng);
    xi = project(xi);
    double v = value(xi);
    double eta = 1.0;
    for (int it = 0; it < opt.refine_steps; ++it) {
      const Eigen::VectorXd g = flatten(grad_action(s, apply(l, unflatten(xi), radius), kappa));
      // tangential part of the gradient on the sphere, in the metric
      Eigen::VectorXd gt = g - xi * xi.dot(G * g) - d * Gd.dot(g);
      const double gnorm = std::sqrt(std::max(0.0, gt.dot(G * gt)));
      if (gnorm < 1e-14 * (1.0 + std::abs(v))) break;
      bool improved = false;
      for (int ls = 0; ls < 30; ++ls, eta *= 0.5) {
        const Eigen::VectorXd trial = project(xi - eta * gt / radius);
        const double vt = value(trial);
        if (vt < v) {
          xi = trial;
          v = vt;
          improved = true;
          break;
        }
      }
      if (!improved) break;
      eta *= 2.0;
    }
    best = std::min(best, v);
  }
  return best - S0;
}

double strictness_barrier(const SurfaceModel& s, const Orbit& orbit, double kappa, double radius, int N,
                          const BarrierOptions& opt) {
  const PolishResult p = polish_critical(s, orbit_to_loop(s, orbit, N), kappa);
  return strictness_barrier(s, p.loop, kappa, radius, opt);
}

namespace {
// Sample j of b continued periodically on the cover.
Vec2 unwrapped(const Loop& b, int j) {
  const int n = b.size();
  const int q = (j >= 0 ? j / n : -((-j + n - 1) / n));
  return b.x[j - q * n] + (b.winding * q).cast<double>();
}

}  // namespace

Vec2 sample_at(const Loop& b, double t) {
  const int i = static_cast<int>(std::floor(t));
  const double u = t - i;
  const Vec2 p0 = unwrapped(b, i - 1), p1 = unwrapped(b, i), p2 = unwrapped(b, i + 1), p3 = unwrapped(b, i + 2);
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u * u +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u * u * u);
}

namespace {
// C0 distance between a and b started at (fractional) sample t, modulo the lattice.
double distance_at_shift(const Loop& a, const Loop& b, double t) {
  const int n = a.size();
  const Vec2 off = a.x[0] - sample_at(b, t);
  const Vec2 lat = Vec2(std::round(off.x()), std::round(off.y()));
  double d = 0.0;
  for (int j = 0; j < n; ++j) d = std::max(d, (a.x[j] - sample_at(b, t + j) - lat).norm());
  return d;
}
}  // namespace

int best_shift(const Loop& a, const Loop& b) {
  if (b.size() != a.size()) throw ConfigError("best_shift: loops need equal sample counts");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < a.size(); ++k) {
    const double d = distance_at_shift(a, b, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double best_fractional_shift(const Loop& a, const Loop& b) {
  const int k = best_shift(a, b);
  double lo = k - 1.0, hi = k + 1.0;
  const double r = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 60; ++it) {
    const double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
    if (distance_at_shift(a, b, x1) < distance_at_shift(a, b, x2))
      hi = x2;
    else
      lo = x1;
  }
  const double t = 0.5 * (lo + hi);
  return distance_at_shift(a, b, t) < distance_at_shift(a, b, k) ? t : static_cast<double>(k);
}

double aligned_distance(const Loop& a, const Loop& b) { return distance_at_shift(a, b, best_fractional_shift(a, b)); }

Loop shift_samples(const Loop& l, int k) {
  const int n = l.size();
  k = ((k % n) + n) % n;
  Loop out = l;
  for (int j = 0; j < n; ++j) out.x[j] = unwrapped(l, j + k);
  if (!l.w.empty())
    for (int j = 0; j < n; ++j) out.w[j] = l.w[(j + k) % n];
  return out;
}

nlohmann::json registry_to_json(const std::vector<std::pair<double, std::vector<MinimizerEntry>>>& registry) {
  auto arr = nlohmann::json::array();
  for (const auto& [kappa, entries] : registry) {
    auto list = nlohmann::json::array();
    for (const auto& e : entries)
      list.push_back({{"action", e.action},
                      {"index", e.index},
                      {"energy_residual", e.energy_residual},
                      {"loop", loop_to_json(e.loop)}});
    arr.push_back({{"kappa", kappa}, {"orbits", list}});
  }
  return {{"minimizers", arr}};
}

}  // namespace maglab
