#include "maglab/index.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fmt/format.h>

#include "maglab/errors.hpp"
#include "maglab/parallel.hpp"

namespace maglab {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0.0 ? a + kTwoPi : a;
}

std::array<std::complex<double>, 2> eig2(const Eigen::Matrix2d& P) {
  const double t = P.trace(), d = P.determinant();
  const std::complex<double> disc = std::sqrt(std::complex<double>(t * t - 4.0 * d, 0.0));
  return {(t + disc) / 2.0, (t - disc) / 2.0};
}
}  // namespace

std::string to_string(StabilityClass c) {
  switch (c) {
    case StabilityClass::NonHyperbolic: return "non-hyperbolic";
    case StabilityClass::OddHyperbolic: return "odd-hyperbolic";
    case StabilityClass::EvenHyperbolic: return "even-hyperbolic";
    case StabilityClass::TransversallyDegenerate: return "transversally-degenerate";
  }
  return "unknown";
}

ReducedPoincare poincare_reduce(const SurfaceModel& s, const Monodromy& m, const Vec4& zeta, double margin_tol) {
  if (!zeta.allFinite()) throw NumericalError("not-applicable", "zeta is not available");
  ReducedPoincare r;
  r.X_H = hamiltonian_vector(s, m.base);
  r.zeta = zeta;
  r.omega_XZ = omega(r.X_H, zeta);
  const Mat4& J = symplectic_J();
  Eigen::Matrix<double, 2, 4> A;
  A.row(0) = r.X_H.transpose() * J;
  A.row(1) = zeta.transpose() * J;
  Eigen::JacobiSVD<Eigen::Matrix<double, 2, 4>> svd(A, Eigen::ComputeFullV);
  const Vec4 n1 = svd.matrixV().col(2), n2 = svd.matrixV().col(3);
  const double w = omega(n1, n2);
  if (std::abs(w) < 1e-12) throw NumericalError("not-applicable", "complement of span(X_H, zeta) is not symplectic");
  r.basis.col(0) = r.X_H;
  r.basis.col(1) = zeta;
  r.basis.col(2) = n1;
  r.basis.col(3) = n2 / w;
  r.block = r.basis.partialPivLu().solve(m.M * r.basis);
  r.shear = r.block(0, 1);
  r.P = r.block.block<2, 2>(2, 2);
  r.det_P = r.P.determinant();

  double off = std::max(r.block.block<2, 2>(0, 2).cwiseAbs().maxCoeff(), r.block.block<2, 2>(2, 0).cwiseAbs().maxCoeff());
  off = std::max({off, std::abs(r.block(0, 0) - 1.0), std::abs(r.block(1, 1) - 1.0), std::abs(r.block(1, 0))});
  r.block_residual = off / std::max(1.0, m.M.cwiseAbs().maxCoeff());

  const Eigen::Vector4cd ev = m.M.eigenvalues();
  const auto sp = eig2(r.P);
  std::vector<std::complex<double>> target = {1.0, 1.0, sp[0], sp[1]};
  std::vector<bool> used(4, false);
  for (const auto& t : target) {
    int best = -1;
    for (int k = 0; k < 4; ++k)
      if (!used[k] && (best < 0 || std::abs(ev[k] - t) < std::abs(ev[best] - t))) best = k;
    used[best] = true;
    r.spectrum_mismatch = std::max(r.spectrum_mismatch, std::abs(ev[best] - t) / std::max(1.0, std::abs(t)));
  }
  r.margin = nondegeneracy_margin(sp);
  r.degenerate = r.margin <= margin_tol;

  // x-translation is an exact symmetry of a y-only field: a fixed vector of M outside
  // span(X_H, zeta) puts 1 in sigma(P) however the trace rounds
  if (s.y_only()) {
    const Vec4 v(1.0, 0.0, 0.0, 0.0);
    const double fixed = (m.M * v - v).norm() / std::max(1.0, m.M.cwiseAbs().maxCoeff());
    Eigen::Matrix<double, 4, 2> V;
    V << r.X_H, zeta;
    const Vec4 off_span = v - V * V.colPivHouseholderQr().solve(v);
    if (fixed <= 1e-6 && off_span.norm() > 1e-3) {
      r.symmetry_degenerate = true;
      r.degenerate = true;
    }
  }
  return r;
}

ReducedPoincare poincare_reduce(const SurfaceModel& s, const Monodromy& m, const OrbitCylinder& cyl,
                                double margin_tol) {
  return poincare_reduce(s, m, cyl.zeta, margin_tol);
}

int BottFunction::value_at(double arg) const {
  arg = wrap(arg);
  if (arg > kTwoPi - 1e-12) arg = 0.0;
  auto it = std::lower_bound(samples.begin(), samples.end(), arg - 1e-12,
                             [](const BottSample& a, double v) { return a.arg < v; });
  if (it == samples.end() || std::abs(it->arg - arg) > 1e-12)
    throw ConfigError(fmt::format("Bott function was not sampled at arg {:.6g}", arg));
  return it->value;
}

BottFunction bott_function(const SurfaceModel& s, const Loop& l, double kappa, const Mat4& M,
                           const BottOptions& opt) {
  BottFunction b;
  b.eigen_args.push_back(0.0);
  const Eigen::Vector4cd ev = M.eigenvalues();
  for (int k = 0; k < 4; ++k)
    if (std::abs(std::abs(ev[k]) - 1.0) <= opt.circle_tol && std::abs(ev[k] - 1.0) > opt.circle_tol)
      b.eigen_args.push_back(wrap(std::arg(ev[k])));
  std::sort(b.eigen_args.begin(), b.eigen_args.end());

  std::vector<double> args = {0.0};
  for (int n = 2; n <= opt.n_max; ++n)
    for (int k = 1; k < n; ++k) args.push_back(kTwoPi * k / n);
  double eps = kTwoPi / 1024;
  for (int r = 0; r < opt.ladder; ++r, eps /= 2) {
    b.eps.push_back(eps);
    args.push_back(eps);
    args.push_back(kTwoPi - eps);
  }
  for (int k = 0; k < opt.fine; ++k) args.push_back(kTwoPi * (k + 0.5) / opt.fine);
  for (double th : b.eigen_args) {
    if (th == 0.0) continue;
    for (int m = 1; m <= opt.near; ++m) {
      args.push_back(wrap(th + opt.near_width * m / opt.near));
      args.push_back(wrap(th - opt.near_width * m / opt.near));
    }
  }
  std::sort(args.begin(), args.end());
  args.erase(std::unique(args.begin(), args.end(), [](double a, double c) { return std::abs(a - c) <= 1e-12; }),
             args.end());

  // Lambda(conj z) = Lambda(z): evaluate on the upper half circle only
  std::map<double, int> slot;
  std::vector<double> upper;
  for (double a : args) {
    const double c = a <= std::numbers::pi ? a : kTwoPi - a;
    auto it = std::find_if(upper.begin(), upper.end(), [&](double u) { return std::abs(u - c) <= 1e-12; });
    if (it == upper.end()) {
      slot[a] = static_cast<int>(upper.size());
      upper.push_back(c);
    } else {
      slot[a] = static_cast<int>(it - upper.begin());
    }
  }
  std::vector<IndexCount> counts(upper.size());
  parallel_for(static_cast<int>(upper.size()), opt.workers, [&](int k) {
    counts[k] = twisted_hessian_index(s, l, kappa, std::polar(1.0, upper[k]));
  });
  for (double a : args) {
    const IndexCount& c = counts[slot[a]];
    b.samples.push_back({a, c.negative, c.marginal});
    b.marginal += c.marginal;
  }
  b.lambda_one = b.samples.front().value;

  const double tol = opt.near_width;
  const int n = static_cast<int>(b.samples.size());
  for (int k = 0; k < n; ++k) {
    const BottSample& p = b.samples[k];
    const BottSample& q = b.samples[(k + 1) % n];
    if (p.value == q.value) continue;
    const double lo = p.arg, hi = k + 1 < n ? q.arg : q.arg + kTwoPi;
    bool ok = false;
    for (double th : b.eigen_args)
      for (double t : {th, th + kTwoPi})
        if (t >= lo - tol && t <= hi + tol) ok = true;
    if (!ok) {
      b.property_i = false;
      b.unexplained.push_back(0.5 * (lo + hi));
    }
  }
  return b;
}

SplittingNumbers splitting_numbers(const BottFunction& b) {
  SplittingNumbers sn;
  for (double e : b.eps) sn.ladder.push_back({b.value_at(e) - b.lambda_one, b.value_at(-e) - b.lambda_one});
  if (sn.ladder.empty()) throw ConfigError("splitting_numbers: Bott grid has no eps ladder");
  sn.plus = sn.ladder.back()[0];
  sn.minus = sn.ladder.back()[1];
  for (const auto& r : sn.ladder) sn.stable = sn.stable && r == sn.ladder.back();
  return sn;
}

double mean_index(const BottFunction& b) {
  std::vector<const BottSample*> v;
  for (const auto& x : b.samples)
    if (x.arg > 0.0) v.push_back(&x);
  const int n = static_cast<int>(v.size());
  if (n == 0) return static_cast<double>(b.lambda_one);
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double prev = k > 0 ? v[k - 1]->arg : v[n - 1]->arg - kTwoPi;
    const double next = k + 1 < n ? v[k + 1]->arg : v[0]->arg + kTwoPi;
    sum += v[k]->value * 0.5 * (next - prev);
  }
  return sum / kTwoPi;
}

std::vector<BottIteration> bott_iteration_check(const SurfaceModel& s, const Loop& l, double kappa,
                                                const BottFunction& b, int n_max) {
  std::vector<BottIteration> out;
  for (int n = 2; n <= n_max; ++n) {
    BottIteration it;
    it.n = n;
    for (int k = 0; k < n; ++k) it.sum += b.value_at(kTwoPi * k / n);
    it.direct = fixed_period_index(s, iterate(l, n), kappa).negative;
    out.push_back(it);
  }
  return out;
}

IndexRelation index_relation_check(double shear, int i, int i_T, double shear_tol) {
  IndexRelation r;
  const int d = i - i_T;
  if (d < 0 || d > 1) {
    r.consistent = false;
    r.message = fmt::format("i - i_T = {} outside [0, 1]", d);
    return r;
  }
  r.marginal = std::abs(shear) < shear_tol;
  const int expected = shear >= 0.0 || r.marginal ? i_T + 1 : i_T;
  r.consistent = i == expected;
  r.message = fmt::format("shear {:.6g}: expected i = {}, found i = {} (i_T = {}){}", shear, expected, i, i_T,
                          r.marginal ? ", marginal" : "");
  return r;
}

Classification classify(const Monodromy& m, const ReducedPoincare& r, int i, double unit_tol, double resolution) {
  (void)m;
  Classification c;
  c.spectrum = eig2(r.P);
  if (r.degenerate) {
    c.cls = StabilityClass::TransversallyDegenerate;
  } else if (std::abs(c.spectrum[0].imag()) > 0.0) {
    c.cls = StabilityClass::NonHyperbolic;
  } else {
    const double lam = std::abs(c.spectrum[0].real()) >= std::abs(c.spectrum[1].real()) ? c.spectrum[0].real()
                                                                                         : c.spectrum[1].real();
    const double dev = std::abs(lam) - 1.0;
    if (dev <= unit_tol)
      c.cls = StabilityClass::NonHyperbolic;
    else
      c.cls = lam < 0.0 ? StabilityClass::OddHyperbolic : StabilityClass::EvenHyperbolic;
    c.borderline = dev > unit_tol && dev <= resolution;
  }
  if (i % 2 == 1 || c.cls == StabilityClass::TransversallyDegenerate)
    c.expected = c.cls != StabilityClass::EvenHyperbolic;
  return c;
}

IndexReport analyze_orbit(const SurfaceModel& s, const Orbit& orbit, const IndexOptions& opt) {
  IndexReport rep;
  rep.orbit = orbit;
  rep.action = orbit_action(s, orbit);
  const PolishResult pol = polish_critical(s, orbit_to_loop(s, orbit, opt.N), orbit.kappa);
  rep.polish_grad = pol.grad_norm;
  const IndexCount cT = fixed_period_index(s, pol.loop, orbit.kappa);
  const IndexCount cf = free_period_hessian_index(s, pol.loop, orbit.kappa);
  rep.i_T = cT.negative;
  rep.i = cf.negative;
  rep.marginal = cT.marginal + cf.marginal;

  const Monodromy m = linearize_flow(s, orbit);
  CylinderOptions co = opt.cylinder;
  co.with_index = false;
  const OrbitCylinder cyl = continue_cylinder(s, orbit, co);
  rep.T_prime = cyl.T_prime;
  rep.cylinder_note = cyl.note;
  rep.reduced = poincare_reduce(s, m, cyl, co.margin_tol);

  rep.bott = bott_function(s, pol.loop, orbit.kappa, m.M, opt.bott);
  rep.split = splitting_numbers(rep.bott);
  rep.mean_index = mean_index(rep.bott);
  rep.iteration = bott_iteration_check(s, pol.loop, orbit.kappa, rep.bott, opt.bott.n_max);
  if (!rep.iteration.empty()) {
    const auto& last = rep.iteration.back();
    rep.mean_vs_iterate = std::abs(rep.mean_index - static_cast<double>(last.direct) / last.n);
  }
  if (rep.reduced.degenerate) {
    const int d = rep.i - rep.i_T;
    rep.relation.consistent = d >= 0 && d <= 1;
    rep.relation.message = "transversally degenerate: only 0 <= i - i_T <= 1 is checked";
  } else {
    rep.relation = index_relation_check(rep.reduced.shear, rep.i, rep.i_T, opt.shear_tol);
  }
  rep.stability = classify(m, rep.reduced, rep.i);
  rep.theorem_checked = !rep.reduced.degenerate && rep.reduced.shear >= 0.0;
  if (rep.theorem_checked) rep.theorem_holds = rep.mean_index > 0.0;
  return rep;
}

nlohmann::json index_report_to_json(const IndexReport& r) {
  using nlohmann::json;
  auto cplx = [](std::complex<double> z) { return json::array({z.real(), z.imag()}); };
  json j;
  j["orbit"] = orbit_to_json(r.orbit);
  j["action"] = r.action;
  j["i_T"] = r.i_T;
  j["i"] = r.i;
  j["marginal"] = r.marginal;
  j["polish_grad"] = r.polish_grad;
  const auto& p = r.reduced;
  j["reduced"] = {{"P", {{p.P(0, 0), p.P(0, 1)}, {p.P(1, 0), p.P(1, 1)}}},
                  {"shear", p.shear},
                  {"det_P", p.det_P},
                  {"omega_XH_zeta", p.omega_XZ},
                  {"block_residual", p.block_residual},
                  {"spectrum_mismatch", p.spectrum_mismatch},
                  {"margin", p.margin},
                  {"degenerate", p.degenerate},
                  {"symmetry_degenerate", p.symmetry_degenerate}};
  j["T_prime_fd"] = r.T_prime;
  j["cylinder_note"] = r.cylinder_note;
  json samples = json::array();
  for (const auto& x : r.bott.samples) samples.push_back({x.arg, x.value});
  j["lambda_samples"] = samples;
  j["lambda_one"] = r.bott.lambda_one;
  j["property_i"] = r.bott.property_i;
  j["S_plus_1"] = r.split.plus;
  j["S_minus_1"] = r.split.minus;
  j["splitting_stable"] = r.split.stable;
  j["mean_index"] = r.mean_index;
  j["mean_vs_iterate"] = r.mean_vs_iterate;
  json it = json::array();
  for (const auto& x : r.iteration) it.push_back({{"n", x.n}, {"sum", x.sum}, {"direct", x.direct}, {"holds", x.holds()}});
  j["bott_iteration"] = it;
  j["relation"] = {{"consistent", r.relation.consistent}, {"marginal", r.relation.marginal}, {"message", r.relation.message}};
  j["stability"] = {{"class", to_string(r.stability.cls)},
                    {"borderline", r.stability.borderline},
                    {"expected", r.stability.expected},
                    {"spectrum", {cplx(r.stability.spectrum[0]), cplx(r.stability.spectrum[1])}}};
  j["mean_index_theorem"] = {{"checked", r.theorem_checked}, {"holds", r.theorem_holds}};
  return j;
}

void write_bott_csv(std::ostream& out, const BottFunction& b) {
  out << "arg,lambda,marginal\n";
  for (const auto& x : b.samples) out << fmt::format("{:.12e},{},{}\n", x.arg, x.value, x.marginal);
}

}  // namespace maglab
