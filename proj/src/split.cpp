#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "maglab/errors.hpp"
#include "maglab/localmin.hpp"
#include "maglab/minimax.hpp"

namespace maglab {

namespace {
double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Track {
  std::vector<double> t;      // times of the loop nodes 0..N
  std::vector<double> theta;  // annulus angle, in time units of the base orbit
  std::vector<double> lambda;  // signed offset from the base orbit
  double period = 0.0;
  double advance = 0.0;  // theta(period) - theta(0)

  // piecewise linear in t, continued by theta(t + period) = theta(t) + advance
  double inverse(double v) const {
    const double q = std::floor((v - theta.front()) / advance);
    const double w = v - q * advance;
    size_t j = std::upper_bound(theta.begin(), theta.end(), w) - theta.begin();
    j = std::clamp<size_t>(j, 1, theta.size() - 1);
    const double r = (w - theta[j - 1]) / (theta[j] - theta[j - 1]);
    return t[j - 1] + r * (t[j] - t[j - 1]) + q * period;
  }
  double lam(double time) const {
    const double w = time - std::floor(time / period) * period;
    size_t j = std::upper_bound(t.begin(), t.end(), w) - t.begin();
    j = std::clamp<size_t>(j, 1, t.size() - 1);
    const double r = (w - t[j - 1]) / (t[j] - t[j - 1]);
    return lambda[j - 1] + r * (lambda[j] - lambda[j - 1]);
  }
};

// Position and cell of the loop's polyline at time t on the cover.
struct CurvePoint {
  int cell;
  double r;
  Vec2 x;
};

CurvePoint locate(const Curve& c, const std::vector<double>& t, const Vec2& wind, double time) {
  const double P = t.back();
  const double q = std::floor(time / P);
  const double w = time - q * P;
  size_t j = std::upper_bound(t.begin(), t.end(), w) - t.begin();
  j = std::clamp<size_t>(j, 1, t.size() - 1);
  const int cell = static_cast<int>(j - 1);
  const double r = std::clamp((w - t[cell]) / c.dt[cell], 0.0, 1.0);
  return {cell, r, (1.0 - r) * c.x[cell] + r * c.x[cell + 1] + q * wind};
}
}  // namespace

SplitResult detect_split(const SurfaceModel& s, const Loop& loop, const Orbit& base, int n, double width,
                         int samples) {
  if (n < 2) throw ConfigError("detect_split: n must be at least 2");
  if (loop.winding != base.winding * n)
    throw NumericalError("not-applicable", "loop is not in the class of the iterate");
  const Loop g = orbit_to_loop(s, base, samples);
  const int M = samples;
  const double T = base.T;
  const Vec2 w = base.winding.cast<double>();
  auto P = [&](long i) {
    const long q = i >= 0 ? i / M : -((-i + M - 1) / M);
    return Vec2(g.x[i - q * M] + q * w);
  };

  const Curve c = to_curve(loop);
  const int N = loop.size();
  Track tr;
  tr.t.resize(N + 1, 0.0);
  for (int j = 0; j < N; ++j) tr.t[j + 1] = tr.t[j] + c.dt[j];
  tr.period = tr.t.back();

  // lattice offset and starting segment from a global search
  long seg = 0;
  Vec2 lat = Vec2::Zero();
  {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < M; ++i) {
      const Vec2 d = c.x[0] - g.x[i];
      const Vec2 L(std::round(d.x()), std::round(d.y()));
      if ((d - L).norm() < best) {
        best = (d - L).norm();
        seg = i;
        lat = L;
      }
    }
  }
  for (int j = 0; j <= N; ++j) {
    const Vec2 p = c.x[j] - lat;
    const long ahead = j == 0 ? 2 : static_cast<long>(std::ceil(2.0 * c.dt[j - 1] / T * M)) + 4;
    double best = std::numeric_limits<double>::infinity();
    long bi = seg;
    double br = 0.0, bl = 0.0;
    for (long i = seg - 4; i <= seg + ahead; ++i) {
      const Vec2 a = P(i), d = P(i + 1) - a;
      const double r = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
      const Vec2 q = a + r * d;
      const double dist = (p - q).norm();
      if (dist < best) {
        best = dist;
        bi = i;
        br = r;
        bl = cross(d.normalized(), p - q);
      }
    }
    seg = bi;
    tr.theta.push_back((bi + br) * T / M);
    tr.lambda.push_back(bl);
  }
  tr.advance = tr.theta.back() - tr.theta.front();
  double lmax = 0.0;
  for (double l : tr.lambda) lmax = std::max(lmax, std::abs(l));
  if (lmax > width) throw NumericalError("not-applicable", fmt::format("loop leaves the annulus (|lambda| = {:.3g})", lmax));
  for (int j = 0; j < N; ++j)
    if (!(tr.theta[j + 1] > tr.theta[j]))
      throw NumericalError("not-applicable", "angle along the base orbit is not increasing");
  if (std::abs(tr.advance - n * T) > 0.25 * T)
    throw NumericalError("not-applicable", "loop does not wind n times around the base orbit");
  tr.advance = n * T;

  std::vector<double> mu(n);
  for (int j = 0; j < n; ++j) mu[j] = tr.lam(tr.inverse(j * T));
  const int k = static_cast<int>(std::max_element(mu.begin(), mu.end()) - mu.begin());
  auto f = [&](double sg) { return tr.lam(tr.inverse((k + sg) * T)) - tr.lam(tr.inverse((k - 1 + sg) * T)); };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) >= 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double sigma = 0.5 * (lo + hi);
  double sh = tr.inverse((k - 1 + sigma) * T);
  double th = tr.inverse((k + sigma) * T);

  // snap to the exact crossing of the two polyline strands: X(t) = X(s) + w
  const Vec2 W = loop.winding.cast<double>();
  {
    const CurvePoint A = locate(c, tr.t, W, sh), B = locate(c, tr.t, W, th);
    double best = std::numeric_limits<double>::infinity();
    double bs = sh, bt = th;
    for (int da = -2; da <= 2; ++da)
      for (int db = -2; db <= 2; ++db) {
        const int ia = A.cell + da, ib = B.cell + db;
        const int ca = (ia % N + N) % N, cb = (ib % N + N) % N;
        const double qa = std::floor(sh / tr.period) + std::floor(static_cast<double>(ia) / N);
        const double qb = std::floor(th / tr.period) + std::floor(static_cast<double>(ib) / N);
        const Vec2 a0 = c.x[ca] + qa * W, ea = c.x[ca + 1] - c.x[ca];
        const Vec2 b0 = c.x[cb] + qb * W - w, eb = c.x[cb + 1] - c.x[cb];
        const double det = cross(ea, eb);
        if (std::abs(det) < 1e-14 * ea.norm() * eb.norm()) continue;
        const Vec2 rhs = b0 - a0;
        const double ra = cross(rhs, eb) / det, rb = cross(rhs, ea) / det;
        if (ra < 0.0 || ra > 1.0 || rb < 0.0 || rb > 1.0) continue;
        const double ts = qa * tr.period + tr.t[ca] + ra * c.dt[ca];
        const double tt = qb * tr.period + tr.t[cb] + rb * c.dt[cb];
        const double dev = std::abs(ts - sh) + std::abs(tt - th);
        if (dev < best) {
          best = dev;
          bs = ts;
          bt = tt;
        }
      }
    sh = bs;
    th = bt;
  }

  // rebuild the loop from time sh with nodes inserted at sh and th
  auto build = [&](double from, double to) {
    const CurvePoint a = locate(c, tr.t, W, from);
    Curve out;
    out.x.push_back(a.x);
    double tcur = from;
    const double q0 = std::floor(from / tr.period);
    for (long j = static_cast<long>(a.cell) + 1 + static_cast<long>(q0) * N;; ++j) {
      const long q = j >= 0 ? j / N : -((-j + N - 1) / N);
      const double tj = tr.t[j - q * N] + q * tr.period;
      if (tj >= to - 1e-13 * tr.period) break;
      if (tj > tcur + 1e-13 * tr.period) {
        out.x.push_back(c.x[j - q * N] + q * W);
        out.dt.push_back(tj - tcur);
        tcur = tj;
      }
    }
    out.x.push_back(locate(c, tr.t, W, to).x);
    out.dt.push_back(to - tcur);
    return out;
  };
  Curve first = build(sh, th);
  Curve rest = build(th, sh + tr.period);
  first.x.back() = first.x.front() + w;
  rest.x.front() = first.x.back();
  rest.x.back() = first.x.front() + W;

  SplitResult out;
  out.S = th - sh;
  out.shift = sh;
  out.k = k;
  out.sigma = sigma;
  out.first = to_loop(first);
  out.rest = to_loop(rest);
  out.loop = to_loop(juxtapose(first, rest));
  return out;
}

double c1_distance(const Loop& a, const Loop& b, int n) {
  const Loop ra = resample_uniform(a, n), rb = resample_uniform(b, n);
  const double t = best_fractional_shift(ra, rb);
  const Vec2 off = ra.x[0] - sample_at(rb, t);
  const Vec2 lat(std::round(off.x()), std::round(off.y()));
  const double ha = ra.T / n, hb = rb.T / n;
  double d = 0.0;
  for (int j = 0; j < n; ++j) {
    d = std::max(d, (ra.x[j] - sample_at(rb, t + j) - lat).norm());
    const Vec2 va = (ra.node(j + 1) - (j == 0 ? Vec2(ra.x[n - 1] - ra.winding.cast<double>()) : ra.x[j - 1])) / (2 * ha);
    const Vec2 vb = (sample_at(rb, t + j + 1) - sample_at(rb, t + j - 1)) / (2 * hb);
    d = std::max(d, (va - vb).norm());
  }
  return d;
}

}  // namespace maglab
