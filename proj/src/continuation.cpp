#include "maglab/continuation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "maglab/action.hpp"
#include "maglab/errors.hpp"

namespace maglab {

std::vector<double> OrbitCylinder::periods() const {
  std::vector<double> out;
  for (const auto& c : samples) out.push_back(c.orbit.T);
  return out;
}

std::array<std::complex<double>, 2> transverse_spectrum(const Mat4& M) {
  const double t = M.trace() - 2.0;
  const std::complex<double> disc = std::sqrt(std::complex<double>(t * t - 4.0, 0.0));
  return {(t + disc) / 2.0, (t - disc) / 2.0};
}

double nondegeneracy_margin(const std::array<std::complex<double>, 2>& spectrum) {
  return std::min(std::abs(spectrum[0] - 1.0), std::abs(spectrum[1] - 1.0));
}

double nondegeneracy_margin(const Eigen::Matrix2d& P) {
  const Eigen::Vector2cd ev = P.eigenvalues();
  return nondegeneracy_margin(std::array<std::complex<double>, 2>{ev[0], ev[1]});
}

namespace {
CylinderSample make_sample(const SurfaceModel& s, const Orbit& o, const CylinderOptions& opt) {
  CylinderSample c;
  c.kappa = o.kappa;
  c.orbit = o;
  c.action = orbit_action(s, o);
  c.margin = nondegeneracy_margin(transverse_spectrum(linearize_flow(s, o).M));
  if (opt.with_index) {
    const PolishResult p = polish_critical(s, orbit_to_loop(s, o, opt.index_N), o.kappa);
    c.index = free_period_hessian_index(s, p.loop, o.kappa).negative;
    c.index_T = fixed_period_index(s, p.loop, o.kappa).negative;
  }
  return c;
}

Vec4 cotangent(const SurfaceModel& s, const PhasePoint& z) {
  const CotangentPoint q = legendre(s, z);
  return (Vec4() << q.x, q.p).finished();
}
}  // namespace

OrbitCylinder continue_cylinder(const SurfaceModel& s, const Orbit& orbit, const CylinderOptions& opt) {
  if (opt.steps < 1 || !(opt.eps > 0.0)) throw ConfigError("continue_cylinder: need eps > 0 and steps >= 1");
  const double kb = orbit.kappa;
  const double h = opt.eps / opt.steps;
  RefineOptions ro = opt.refine;
  ro.steps_per_segment = orbit.steps_per_segment;
  ro.phase_ref = orbit.z0;

  OrbitCylinder cyl;
  cyl.kappa_bar = kb;
  const CylinderSample anchor = make_sample(s, orbit, opt);
  const bool degenerate_anchor = anchor.margin <= opt.margin_tol;
  if (degenerate_anchor) cyl.note = fmt::format("anchor is transversally degenerate (margin {:.3g})", anchor.margin);

  std::vector<CylinderSample> up, down;
  for (int dir : {1, -1}) {
    auto& side = dir > 0 ? up : down;
    const Orbit* prev2 = nullptr;
    const Orbit* prev = &orbit;
    for (int k = 1; k <= opt.steps; ++k) {
      const double kappa = kb + dir * k * h;
      std::vector<PhasePoint> seed = prev->nodes;
      double T = prev->T;
      if (prev2) {
        for (size_t i = 0; i < seed.size(); ++i) seed[i] = unpack(2.0 * pack(prev->nodes[i]) - pack(prev2->nodes[i]));
        T = 2.0 * prev->T - prev2->T;
      }
      Orbit next;
      try {
        next = refine_from_nodes(s, seed, T, orbit.winding, kappa, ro);
      } catch (const NumericalError& e) {
        cyl.truncated = true;
        cyl.note += fmt::format("{}corrector failed at kappa {:.6g} ({})", cyl.note.empty() ? "" : "; ", kappa, e.kind);
        break;
      }
      if (std::abs(next.T - prev->T) > opt.mesh_bound * prev->T) {
        cyl.truncated = cyl.bifurcation = true;
        cyl.note += fmt::format("{}period jump at kappa {:.6g}", cyl.note.empty() ? "" : "; ", kappa);
        break;
      }
      CylinderSample c = make_sample(s, next, opt);
      if (!degenerate_anchor && c.margin <= opt.margin_tol) {
        cyl.truncated = cyl.bifurcation = true;
        cyl.note += fmt::format("{}non-degeneracy lost at kappa {:.6g}", cyl.note.empty() ? "" : "; ", kappa);
        break;
      }
      side.push_back(std::move(c));
      prev2 = prev;
      prev = &side.back().orbit;
    }
  }
  for (auto it = down.rbegin(); it != down.rend(); ++it) cyl.samples.push_back(*it);
  cyl.anchor = static_cast<int>(cyl.samples.size());
  cyl.samples.push_back(anchor);
  for (auto& c : up) cyl.samples.push_back(c);

  if (up.size() >= 2 && down.size() >= 2)
    cyl.T_prime = (8.0 * (up[0].orbit.T - down[0].orbit.T) - (up[1].orbit.T - down[1].orbit.T)) / (12.0 * h);
  else if (!up.empty() && !down.empty())
    cyl.T_prime = (up.front().orbit.T - down.front().orbit.T) / (2.0 * h);
  else if (!up.empty())
    cyl.T_prime = (up.front().orbit.T - orbit.T) / h;
  else if (!down.empty())
    cyl.T_prime = (orbit.T - down.front().orbit.T) / h;
  else
    cyl.T_prime = std::numeric_limits<double>::quiet_NaN();

  auto zeta_at = [&](double hz) {
    const Orbit plus = refine_from_nodes(s, orbit.nodes, orbit.T, orbit.winding, kb + hz, ro);
    const Orbit minus = refine_from_nodes(s, orbit.nodes, orbit.T, orbit.winding, kb - hz, ro);
    return Vec4(-(cotangent(s, plus.z0) - cotangent(s, minus.z0)) / (2.0 * hz));
  };
  try {
    cyl.zeta = zeta_at(opt.eps / 8);
    cyl.zeta_richardson = (cyl.zeta - zeta_at(opt.eps / 16)).norm();
  } catch (const NumericalError& e) {
    cyl.zeta.setConstant(std::numeric_limits<double>::quiet_NaN());
    cyl.note += fmt::format("{}zeta corrector failed ({})", cyl.note.empty() ? "" : "; ", e.kind);
  }
  return cyl;
}

Orbit continue_to_energy(const SurfaceModel& s, const Orbit& orbit, double kappa, int steps) {
  if (steps < 1 || !(kappa > 0.0) || !(orbit.kappa > 0.0)) throw ConfigError("continue_to_energy: need positive energies");
  RefineOptions ro;
  ro.steps_per_segment = orbit.steps_per_segment;
  const double ratio = std::pow(kappa / orbit.kappa, 1.0 / steps);
  Orbit prev = orbit, cur = orbit;
  for (int k = 1; k <= steps; ++k) {
    const double target = k == steps ? kappa : orbit.kappa * std::pow(ratio, k);
    std::vector<PhasePoint> seed = cur.nodes;
    double T = cur.T;
    if (k > 1) {
      // secant in log kappa, which is uniform here
      for (size_t i = 0; i < seed.size(); ++i) seed[i] = unpack(2.0 * pack(cur.nodes[i]) - pack(prev.nodes[i]));
      T = 2.0 * cur.T - prev.T;
    }
    ro.phase_ref = cur.z0;
    Orbit next;
    try {
      next = refine_from_nodes(s, seed, T, orbit.winding, target, ro);
    } catch (const NumericalError&) {
      next = refine_from_nodes(s, cur.nodes, cur.T, orbit.winding, target, ro);
    }
    prev = std::move(cur);
    cur = std::move(next);
  }
  return cur;
}

void write_cylinder_csv(std::ostream& out, const OrbitCylinder& c) {
  out << "kappa,T,S,index,index_T,margin\n";
  for (const auto& x : c.samples)
    out << fmt::format("{:.12e},{:.12e},{:.12e},{},{},{:.6e}\n", x.kappa, x.orbit.T, x.action, x.index, x.index_T,
                       x.margin);
}

}  // namespace maglab
