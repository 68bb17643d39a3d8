#include "maglab/action.hpp"

#include <cmath>
#include <numeric>

#include "maglab/errors.hpp"
#include "maglab/linalg.hpp"

namespace maglab {

Vec2 Loop::node(int j) const {
  const int n = size();
  if (j == n) return x[0] + winding.cast<double>();
  return x[j];
}

void Loop::validate() const {
  if (size() < 3) throw ConfigError("loop: needs at least 3 samples");
  if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("loop: period must be positive");
  if (!w.empty()) {
    if (static_cast<int>(w.size()) != size()) throw ConfigError("loop: weight count must equal sample count");
    double sum = 0.0;
    for (double v : w) {
      if (!(v > 0.0)) throw ConfigError("loop: weights must be positive");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("loop: weights must sum to 1");
  }
  for (const auto& p : x)
    if (!p.allFinite()) throw ConfigError("loop: non-finite sample");
}

LoopTangent LoopTangent::zero(int n) { return {std::vector<Vec2>(n, Vec2::Zero()), 0.0}; }

LoopTangent& LoopTangent::operator+=(const LoopTangent& o) {
  for (size_t j = 0; j < xi.size(); ++j) xi[j] += o.xi[j];
  tau += o.tau;
  return *this;
}

LoopTangent LoopTangent::operator*(double a) const {
  LoopTangent t = *this;
  for (auto& v : t.xi) v *= a;
  t.tau *= a;
  return t;
}

Loop apply(const Loop& l, const LoopTangent& t, double step) {
  Loop out = l;
  for (int j = 0; j < l.size(); ++j) out.x[j] += step * t.xi[j];
  out.T += step * t.tau;
  return out;
}

double Curve::duration() const { return std::accumulate(dt.begin(), dt.end(), 0.0); }

Curve to_curve(const Loop& l) {
  Curve c;
  const int n = l.size();
  c.x.reserve(n + 1);
  for (int j = 0; j <= n; ++j) c.x.push_back(l.node(j));
  c.dt.reserve(n);
  for (int j = 0; j < n; ++j) c.dt.push_back(l.T * l.weight(j));
  return c;
}

Curve juxtapose(const Curve& a, const Curve& b) {
  if (a.x.empty()) return b;
  if (b.x.empty()) return a;
  const Vec2 gap = a.x.back() - b.x.front();
  const Vec2 shift(std::round(gap.x()), std::round(gap.y()));
  if ((gap - shift).cwiseAbs().maxCoeff() > 1e-9)
    throw NumericalError("juxtapose", "curves do not share an endpoint modulo the lattice");
  Curve c = a;
  for (size_t j = 1; j < b.x.size(); ++j) c.x.push_back(b.x[j] + shift);
  // keep the shared node exactly equal to a's end
  c.dt.insert(c.dt.end(), b.dt.begin(), b.dt.end());
  return c;
}

Curve reversed(const Curve& c) {
  Curve r;
  r.x.assign(c.x.rbegin(), c.x.rend());
  r.dt.assign(c.dt.rbegin(), c.dt.rend());
  return r;
}

Loop to_loop(const Curve& c) {
  const Vec2 gap = c.x.back() - c.x.front();
  const Vec2 wind(std::round(gap.x()), std::round(gap.y()));
  if ((gap - wind).cwiseAbs().maxCoeff() > 1e-9) throw NumericalError("to_loop", "curve is not closed");
  Loop l;
  l.x.assign(c.x.begin(), c.x.end() - 1);
  l.winding = wind.cast<int>();
  l.T = c.duration();
  l.w.resize(c.dt.size());
  for (size_t j = 0; j < c.dt.size(); ++j) l.w[j] = c.dt[j] / l.T;
  return l;
}

Loop resample_uniform(const Loop& l, int n) {
  const Curve c = to_curve(l);
  Loop out;
  out.T = l.T;
  out.winding = l.winding;
  out.x.resize(n);
  size_t cell = 0;
  double t0 = 0.0;  // start time of the current cell
  for (int k = 0; k < n; ++k) {
    const double t = l.T * k / n;
    while (cell + 1 < c.dt.size() && t0 + c.dt[cell] <= t) {
      t0 += c.dt[cell];
      ++cell;
    }
    const double a = std::clamp((t - t0) / c.dt[cell], 0.0, 1.0);
    out.x[k] = (1.0 - a) * c.x[cell] + a * c.x[cell + 1];
  }
  return out;
}

double phi_weight(double T) {
  if (T <= 0.5) return T * T;
  if (T >= 1.0) return 1.0;
  const double d = T - 0.5;
  return 0.25 + d * (1.0 + d * (1.0 + d * (30.0 + d * (-104.0 + d * 88.0))));
}

double curve_action(const SurfaceModel& s, const Curve& c, double kappa) {
  const size_t n = c.dt.size();
  std::vector<PointData> pd(n + 1);
  for (size_t j = 0; j <= n; ++j) pd[j] = eval_point(s, c.x[j]);
  double S = 0.0;
  for (size_t j = 0; j < n; ++j) {
    const Vec2 d = c.x[j + 1] - c.x[j];
    const double tau = c.dt[j];
    S += (pd[j].G + pd[j + 1].G) * d.squaredNorm() / (4.0 * tau) + 0.5 * (pd[j].theta + pd[j + 1].theta).dot(d) +
         kappa * tau;
  }
  return S;
}

double action(const SurfaceModel& s, const Loop& l, double kappa) {
  const int n = l.size();
  std::vector<PointData> pd(n);
  for (int j = 0; j < n; ++j) pd[j] = eval_point(s, l.x[j]);
  double S = 0.0;
  for (int c = 0; c < n; ++c) {
    const int b = (c + 1) % n;
    const Vec2 d = l.node(c + 1) - l.x[c];
    const double tau = l.T * l.weight(c);
    S += (pd[c].G + pd[b].G) * d.squaredNorm() / (4.0 * tau) + 0.5 * (pd[c].theta + pd[b].theta).dot(d) +
         kappa * tau;
  }
  if (!std::isfinite(S)) throw NumericalError("action", "non-finite action (malformed loop)");
  return S;
}

LoopTangent action_differential(const SurfaceModel& s, const Loop& l, double kappa) {
  const int n = l.size();
  std::vector<PointDerivs> pd(n);
  for (int j = 0; j < n; ++j) pd[j] = eval_derivs(s, l.x[j]);
  LoopTangent g = LoopTangent::zero(n);
  for (int c = 0; c < n; ++c) {
    const int b = (c + 1) % n;
    const auto& A = pd[c];
    const auto& B = pd[b];
    const Vec2 d = l.node(c + 1) - l.x[c];
    const double tau = l.T * l.weight(c);
    const double dd = d.squaredNorm();
    const double kin = (A.G + B.G) * dd / (4.0 * tau);
    const Vec2 thm = 0.5 * (A.theta + B.theta);
    g.xi[c] += A.dG * dd / (4.0 * tau) - (A.G + B.G) * d / (2.0 * tau) + 0.5 * A.dtheta.transpose() * d - thm;
    g.xi[b] += B.dG * dd / (4.0 * tau) + (A.G + B.G) * d / (2.0 * tau) + 0.5 * B.dtheta.transpose() * d + thm;
    g.tau += (-kin + kappa * tau) / l.T;
  }
  return g;
}

double period_derivative(const SurfaceModel& s, const Loop& l, double kappa) {
  const int n = l.size();
  std::vector<double> G(n);
  for (int j = 0; j < n; ++j) G[j] = eval_point(s, l.x[j]).G;
  double acc = 0.0;
  for (int c = 0; c < n; ++c) {
    const double tau = l.T * l.weight(c);
    acc += -(G[c] + G[(c + 1) % n]) * (l.node(c + 1) - l.x[c]).squaredNorm() / (4.0 * tau) + kappa * tau;
  }
  return acc / l.T;
}

namespace {
struct Gram {
  std::vector<double> sub, diag, sup;
};

Gram h1_gram(const SurfaceModel& s, const Loop& l) {
  const int n = l.size();
  std::vector<double> G(n);
  for (int j = 0; j < n; ++j) G[j] = eval_point(s, l.x[j]).G;
  Gram m{std::vector<double>(n), std::vector<double>(n, 0.0), std::vector<double>(n)};
  for (int c = 0; c < n; ++c) {
    const int b = (c + 1) % n;
    const double w = l.weight(c);
    const double gbar = 0.5 * (G[c] + G[b]);
    m.diag[c] += 0.5 * w * G[c] + gbar / w;
    m.diag[b] += 0.5 * w * G[b] + gbar / w;
    m.sup[c] = -gbar / w;
    m.sub[b] = -gbar / w;
  }
  return m;
}
}  // namespace

double h1_inner(const SurfaceModel& s, const Loop& l, const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  const Gram m = h1_gram(s, l);
  const int n = l.size();
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += m.diag[j] * a[j].dot(b[j]);
    acc += m.sup[j] * (a[j].dot(b[(j + 1) % n]) + a[(j + 1) % n].dot(b[j]));
  }
  return acc;
}

LoopTangent grad_action(const SurfaceModel& s, const Loop& l, double kappa) {
  LoopTangent d = action_differential(s, l, kappa);
  const int n = l.size();
  const Gram m = h1_gram(s, l);
  const double phi = phi_weight(l.T);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd r(n);
    for (int j = 0; j < n; ++j) r[j] = d.xi[j][k] / phi;
    const Eigen::VectorXd sol = cyclic_tridiag_solve(m.sub, m.diag, m.sup, r);
    for (int j = 0; j < n; ++j) d.xi[j][k] = sol[j];
  }
  return d;
}

double metric_norm(const SurfaceModel& s, const Loop& l, const LoopTangent& t) {
  return std::sqrt(t.tau * t.tau + phi_weight(l.T) * h1_inner(s, l, t.xi, t.xi));
}

Eigen::MatrixXd metric_matrix(const SurfaceModel& s, const Loop& l) {
  const int n = l.size();
  const Gram m = h1_gram(s, l);
  const double phi = phi_weight(l.T);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
  for (int j = 0; j < n; ++j) {
    const int k = (j + 1) % n;
    for (int c = 0; c < 2; ++c) {
      G(2 * j + c, 2 * j + c) += phi * m.diag[j];
      G(2 * j + c, 2 * k + c) += phi * m.sup[j];
      G(2 * k + c, 2 * j + c) += phi * m.sup[j];
    }
  }
  G(2 * n, 2 * n) = 1.0;
  return G;
}

double loop_length(const SurfaceModel& s, const Loop& l) {
  const int n = l.size();
  double len = 0.0;
  for (int c = 0; c < n; ++c) {
    const double G = 0.5 * (eval_point(s, l.x[c]).G + eval_point(s, l.x[(c + 1) % n]).G);
    len += std::sqrt(G) * (l.node(c + 1) - l.x[c]).norm();
  }
  return len;
}

double theta_integral(const SurfaceModel& s, const Loop& l) {
  const int n = l.size();
  double acc = 0.0;
  for (int c = 0; c < n; ++c)
    acc += 0.5 * (eval_point(s, l.x[c]).theta + eval_point(s, l.x[(c + 1) % n]).theta).dot(l.node(c + 1) - l.x[c]);
  return acc;
}

Loop iterate(const Loop& l, int n) {
  if (n < 1) throw ConfigError("iterate: n must be at least 1");
  Loop out;
  out.T = l.T * n;
  out.winding = l.winding * n;
  const int N = l.size();
  out.x.reserve(static_cast<size_t>(N) * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < N; ++j) out.x.push_back(l.x[j] + (l.winding * k).cast<double>());
  if (!l.w.empty()) {
    out.w.reserve(out.x.size());
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < N; ++j) out.w.push_back(l.w[j] / n);
  }
  return out;
}

Loop constant_loop(const Vec2& p, double T, int N) {
  Loop l;
  l.x.assign(N, p);
  l.T = T;
  return l;
}

Loop orbit_to_loop(const SurfaceModel& s, const Orbit& orbit, int N) {
  Loop l;
  l.T = orbit.T;
  l.winding = orbit.winding;
  for (const auto& z : sample_orbit(s, orbit, N)) l.x.push_back(z.x);
  return l;
}

std::vector<CellHessian> cell_hessians(const SurfaceModel& s, const Loop& l, double kappa) {
  (void)kappa;  // kappa enters linearly in T and drops out of the second derivatives
  const int n = l.size();
  std::vector<PointDerivs> pd(n);
  for (int j = 0; j < n; ++j) pd[j] = eval_derivs(s, l.x[j]);
  std::vector<CellHessian> out(n);
  const Mat2 I = Mat2::Identity();
  for (int c = 0; c < n; ++c) {
    const auto& A = pd[c];
    const auto& B = pd[(c + 1) % n];
    const Vec2 d = l.node(c + 1) - l.x[c];
    const double tau = l.T * l.weight(c);
    const double dd = d.squaredNorm();
    const double Gs = A.G + B.G;
    const Mat2 kaa = A.ddG * dd / (4.0 * tau) - (A.dG * d.transpose() + d * A.dG.transpose()) / (2.0 * tau) +
                     Gs * I / (2.0 * tau);
    const Mat2 kbb = B.ddG * dd / (4.0 * tau) + (B.dG * d.transpose() + d * B.dG.transpose()) / (2.0 * tau) +
                     Gs * I / (2.0 * tau);
    const Mat2 kab = A.dG * d.transpose() / (2.0 * tau) - d * B.dG.transpose() / (2.0 * tau) - Gs * I / (2.0 * tau);
    const Mat2 maa = 0.5 * (d.x() * A.ddtheta[0] + d.y() * A.ddtheta[1]) - 0.5 * (A.dtheta + A.dtheta.transpose());
    const Mat2 mbb = 0.5 * (d.x() * B.ddtheta[0] + d.y() * B.ddtheta[1]) + 0.5 * (B.dtheta + B.dtheta.transpose());
    const Mat2 mab = 0.5 * A.dtheta.transpose() - 0.5 * B.dtheta;
    CellHessian& h = out[c];
    h.H.block<2, 2>(0, 0) = kaa + maa;
    h.H.block<2, 2>(2, 2) = kbb + mbb;
    h.H.block<2, 2>(0, 2) = kab + mab;
    h.H.block<2, 2>(2, 0) = (kab + mab).transpose();
    const Vec2 dka = A.dG * dd / (4.0 * tau) - Gs * d / (2.0 * tau);
    const Vec2 dkb = B.dG * dd / (4.0 * tau) + Gs * d / (2.0 * tau);
    h.HT << -dka / l.T, -dkb / l.T;
    h.HTT = 2.0 * (Gs * dd / (4.0 * tau)) / (l.T * l.T);
  }
  return out;
}

Eigen::MatrixXd free_period_hessian(const SurfaceModel& s, const Loop& l, double kappa) {
  const int n = l.size();
  const auto cells = cell_hessians(s, l, kappa);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2 * n + 1, 2 * n + 1);
  for (int c = 0; c < n; ++c) {
    const int idx[2] = {2 * c, 2 * ((c + 1) % n)};
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q) H.block<2, 2>(idx[p], idx[q]) += cells[c].H.block<2, 2>(2 * p, 2 * q);
    for (int p = 0; p < 2; ++p) {
      H.block<2, 1>(idx[p], 2 * n) += cells[c].HT.segment<2>(2 * p);
      H.block<1, 2>(2 * n, idx[p]) += cells[c].HT.segment<2>(2 * p).transpose();
    }
    H(2 * n, 2 * n) += cells[c].HTT;
  }
  return H;
}

namespace {
// Block position of node j in the folded order 0, n-1, 1, n-2, ... which turns the
// cyclic block-tridiagonal pattern into a band of two blocks.
int folded(int j, int n) {
  const int half = (n + 1) / 2;
  return j < half ? 2 * j : 2 * (n - 1 - j) + 1;
}

IndexCount count(const Eigen::VectorXd& ev, bool exclude_marginal) {
  IndexCount r;
  r.spectrum = ev;
  r.scale = ev.cwiseAbs().maxCoeff();
  const double tol = kDegeneracyTol * r.scale;
  r.min_abs = r.scale;
  for (int k = 0; k < ev.size(); ++k) {
    const double a = std::abs(ev[k]);
    if (a <= tol) {
      ++r.marginal;
      if (exclude_marginal) continue;
    }
    r.min_abs = std::min(r.min_abs, a);
    if (ev[k] < 0.0) ++r.negative;
  }
  return r;
}

// Restriction of a symmetric form to the orthogonal complement of v.
Eigen::MatrixXd restrict_complement(const Eigen::MatrixXd& A, const Eigen::VectorXd& v) {
  const int n = static_cast<int>(A.rows());
  Eigen::VectorXd u = v.normalized();
  // Householder reflector P with P e_0 = u.
  Eigen::VectorXd h = u;
  h[0] -= 1.0;
  const double hn = h.norm();
  Eigen::MatrixXd B = A;
  if (hn > 1e-14) {
    h /= hn;
    const Eigen::VectorXd Ah = A * h;
    const double hAh = h.dot(Ah);
    // P A P with P = I - 2 h h^T
    B = A - 2.0 * Ah * h.transpose() - 2.0 * h * Ah.transpose() + 4.0 * hAh * h * h.transpose();
  }
  return B.bottomRightCorner(n - 1, n - 1);
}

Eigen::VectorXd velocity_field(const Loop& l, int dim) {
  const int n = l.size();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(dim);
  for (int j = 0; j < n; ++j) {
    const Vec2 prev = j == 0 ? l.x[n - 1] - l.winding.cast<double>() : l.x[j - 1];
    d.segment<2>(2 * j) = 0.5 * (l.node(j + 1) - prev);
  }
  return d;
}
}  // namespace

IndexCount twisted_hessian_index(const SurfaceModel& s, const Loop& l, double kappa, std::complex<double> z) {
  const int n = l.size();
  const auto cells = cell_hessians(s, l, kappa);
  HermitianBand A(2 * n, 5);
  for (int c = 0; c < n; ++c) {
    const int a = c, b = (c + 1) % n;
    const std::complex<double> ph = (c == n - 1) ? z : std::complex<double>(1.0, 0.0);
    const int pa = 2 * folded(a, n), pb = 2 * folded(b, n);
    const Eigen::Matrix4d& H = cells[c].H;
    for (int r = 0; r < 2; ++r)
      for (int q = r; q < 2; ++q) {
        A.add(pa + r, pa + q, H(r, q));
        A.add(pb + r, pb + q, H(2 + r, 2 + q));
      }
    for (int r = 0; r < 2; ++r)
      for (int q = 0; q < 2; ++q) A.add(pa + r, pb + q, H(r, 2 + q) * ph);
  }
  const bool at_one = std::abs(z - 1.0) < 1e-14;
  return count(A.eigenvalues(), at_one);
}

IndexCount fixed_period_index(const SurfaceModel& s, const Loop& l, double kappa) {
  const int n = l.size();
  const Eigen::MatrixXd H = free_period_hessian(s, l, kappa).topLeftCorner(2 * n, 2 * n);
  return count(symmetric_eigenvalues(restrict_complement(H, velocity_field(l, 2 * n))), true);
}

IndexCount free_period_hessian_index(const SurfaceModel& s, const Loop& l, double kappa) {
  const int n = l.size();
  const Eigen::MatrixXd H = free_period_hessian(s, l, kappa);
  return count(symmetric_eigenvalues(restrict_complement(H, velocity_field(l, 2 * n + 1))), true);
}

PolishResult polish_critical(const SurfaceModel& s, const Loop& l0, double kappa, double tol, int max_iter) {
  PolishResult r;
  r.loop = l0;
  const int n = l0.size();
  auto flat = [&](const LoopTangent& t) {
    Eigen::VectorXd g(2 * n + 1);
    for (int j = 0; j < n; ++j) g.segment<2>(2 * j) = t.xi[j];
    g[2 * n] = t.tau;
    return g;
  };
  r.grad_norm = metric_norm(s, r.loop, grad_action(s, r.loop, kappa));
  for (r.iterations = 0; r.iterations < max_iter && r.grad_norm > tol; ++r.iterations) {
    const Eigen::VectorXd g = flat(action_differential(s, r.loop, kappa));
    const Eigen::MatrixXd H = free_period_hessian(s, r.loop, kappa);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double cut = 1e-10 * lam.cwiseAbs().maxCoeff();
    const Eigen::VectorXd c = es.eigenvectors().transpose() * g;
    Eigen::VectorXd step = Eigen::VectorXd::Zero(2 * n + 1);
    for (int k = 0; k < lam.size(); ++k)
      if (std::abs(lam[k]) > cut) step -= (c[k] / lam[k]) * es.eigenvectors().col(k);
    LoopTangent t = LoopTangent::zero(n);
    for (int j = 0; j < n; ++j) t.xi[j] = step.segment<2>(2 * j);
    t.tau = step[2 * n];
    double a = 1.0;
    bool accepted = false;
    for (int k = 0; k < 12; ++k, a *= 0.5) {
      Loop trial = apply(r.loop, t, a);
      if (!(trial.T > 0.0)) continue;
      const double gn = metric_norm(s, trial, grad_action(s, trial, kappa));
      if (gn < r.grad_norm) {
        r.loop = std::move(trial);
        r.grad_norm = gn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  r.converged = r.grad_norm <= tol;
  return r;
}

nlohmann::json loop_to_json(const Loop& l) {
  nlohmann::json j;
  j["N"] = l.size();
  j["T"] = l.T;
  j["winding"] = {l.winding.x(), l.winding.y()};
  auto samples = nlohmann::json::array();
  for (const auto& p : l.x) {
    samples.push_back(p.x());
    samples.push_back(p.y());
  }
  j["samples"] = samples;
  if (!l.w.empty()) j["weights"] = l.w;
  return j;
}

Loop loop_from_json(const nlohmann::json& j) {
  Loop l;
  try {
    const int n = j.at("N").get<int>();
    l.T = j.at("T").get<double>();
    const auto w = j.at("winding");
    l.winding = Vec2i(w.at(0).get<int>(), w.at(1).get<int>());
    const auto& smp = j.at("samples");
    if (static_cast<int>(smp.size()) != 2 * n) throw ConfigError("loop: samples must hold 2N numbers");
    for (int k = 0; k < n; ++k) l.x.emplace_back(smp[2 * k].get<double>(), smp[2 * k + 1].get<double>());
    if (j.contains("weights")) l.w = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("loop: ") + e.what());
  }
  l.validate();
  return l;
}

}  // namespace maglab
