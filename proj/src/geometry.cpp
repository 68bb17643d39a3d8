#include "maglab/geometry.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "maglab/errors.hpp"

namespace maglab {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Vec2 reduce(const Vec2& p) { return {p.x() - std::floor(p.x()), p.y() - std::floor(p.y())}; }

std::vector<FourierTerm> terms_from_json(const nlohmann::json& j, const char* key) {
  std::vector<FourierTerm> out;
  if (!j.contains(key)) return out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ConfigError(std::string("surface: ") + key + " must be a list");
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 4)
      throw ConfigError(std::string("surface: entries of ") + key + " are [m, n, cos, sin]");
    if (!e[0].is_number_integer() || !e[1].is_number_integer())
      throw ConfigError(std::string("surface: modes in ") + key + " must be integers");
    out.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<double>(), e[3].get<double>()});
  }
  return out;
}

nlohmann::json terms_to_json(const FourierSeries& s) {
  auto arr = nlohmann::json::array();
  for (const auto& t : s.terms()) arr.push_back({t.m, t.n, t.c, t.s});
  return arr;
}
}  // namespace

FourierSeries::FourierSeries(std::vector<FourierTerm> terms) : terms_(std::move(terms)) {}

double FourierSeries::value(const Vec2& p) const {
  const Vec2 q = reduce(p);
  double v = 0.0;
  for (const auto& t : terms_) {
    const double phi = kTwoPi * (t.m * q.x() + t.n * q.y());
    v += t.c * std::cos(phi) + t.s * std::sin(phi);
  }
  return v;
}

void FourierSeries::eval(const Vec2& p, double& v, Vec2& d, Mat2& dd) const {
  const Vec2 q = reduce(p);
  v = 0.0;
  d.setZero();
  dd.setZero();
  for (const auto& t : terms_) {
    const double phi = kTwoPi * (t.m * q.x() + t.n * q.y());
    const double cp = std::cos(phi), sp = std::sin(phi);
    const Vec2 k(kTwoPi * t.m, kTwoPi * t.n);
    const double val = t.c * cp + t.s * sp;
    v += val;
    d += k * (t.s * cp - t.c * sp);
    dd -= (k * k.transpose()) * val;
  }
}

int FourierSeries::max_mode() const {
  int k = 0;
  for (const auto& t : terms_) k = std::max({k, std::abs(t.m), std::abs(t.n)});
  return k;
}

FourierSeries FourierSeries::operator*(double a) const {
  auto t = terms_;
  for (auto& e : t) {
    e.c *= a;
    e.s *= a;
  }
  return FourierSeries(std::move(t));
}

FourierSeries FourierSeries::operator+(const FourierSeries& o) const {
  auto t = terms_;
  t.insert(t.end(), o.terms_.begin(), o.terms_.end());
  return FourierSeries(std::move(t));
}

bool SurfaceModel::y_only() const {
  for (const auto* s : {&u, &theta_x, &theta_y})
    for (const auto& t : s->terms())
      if (t.m != 0) return false;
  return true;
}

void SurfaceModel::validate() const {
  if (K < 0) throw ConfigError("surface: K must be non-negative");
  for (const auto* s : {&u, &theta_x, &theta_y}) {
    if (s->max_mode() > K) throw ConfigError("surface: Fourier mode exceeds K");
    for (const auto& t : s->terms())
      if (!std::isfinite(t.c) || !std::isfinite(t.s))
        throw ConfigError("surface: non-finite coefficient");
  }
}

GeometryEval eval_geometry(const SurfaceModel& surface, const Vec2& point) {
  GeometryEval e;
  e.point = point;
  double u = 0.0;
  surface.u.eval(point, u, e.du, e.ddu);
  double tx = 0.0, ty = 0.0;
  Vec2 dtx, dty;
  surface.theta_x.eval(point, tx, dtx, e.ddtheta[0]);
  surface.theta_y.eval(point, ty, dty, e.ddtheta[1]);
  e.theta = Vec2(tx, ty);
  e.dtheta.row(0) = dtx.transpose();
  e.dtheta.row(1) = dty.transpose();

  e.conformal = std::exp(2.0 * u);
  e.g = e.conformal * Mat2::Identity();
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        e.christoffel[k * 4 + i * 2 + j] =
            (k == i ? e.du[j] : 0.0) + (k == j ? e.du[i] : 0.0) - (i == j ? e.du[k] : 0.0);

  e.dtheta_density = dty.x() - dtx.y();
  e.f = e.dtheta_density / e.conformal;
  Vec2 dB;
  for (int l = 0; l < 2; ++l) dB[l] = e.ddtheta[1](l, 0) - e.ddtheta[0](l, 1);
  e.df = (dB - 2.0 * e.dtheta_density * e.du) / e.conformal;
  return e;
}

PointData eval_point(const SurfaceModel& surface, const Vec2& point) {
  return {std::exp(2.0 * surface.u.value(point)),
          Vec2(surface.theta_x.value(point), surface.theta_y.value(point))};
}

PointDerivs eval_derivs(const SurfaceModel& surface, const Vec2& point) {
  PointDerivs d;
  double u;
  Vec2 du;
  Mat2 ddu;
  surface.u.eval(point, u, du, ddu);
  d.G = std::exp(2.0 * u);
  d.dG = 2.0 * d.G * du;
  d.ddG = d.G * (2.0 * ddu + 4.0 * du * du.transpose());
  double tx, ty;
  Vec2 dtx, dty;
  surface.theta_x.eval(point, tx, dtx, d.ddtheta[0]);
  surface.theta_y.eval(point, ty, dty, d.ddtheta[1]);
  d.theta = Vec2(tx, ty);
  d.dtheta.row(0) = dtx.transpose();
  d.dtheta.row(1) = dty.transpose();
  return d;
}

Vec2 rotate90(const SurfaceModel&, const Vec2&, const Vec2& v) { return {-v.y(), v.x()}; }

double metric_dot(const SurfaceModel& surface, const Vec2& point, const Vec2& a, const Vec2& b) {
  return std::exp(2.0 * surface.u.value(point)) * a.dot(b);
}

SurfaceModel surface_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("surface: expected a JSON object");
  SurfaceModel s;
  try {
    s.K = j.value("K", 8);
    s.u = FourierSeries(terms_from_json(j, "fourier_u"));
    s.theta_x = FourierSeries(terms_from_json(j, "fourier_theta_x"));
    s.theta_y = FourierSeries(terms_from_json(j, "fourier_theta_y"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("surface: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json surface_to_json(const SurfaceModel& s) {
  return {{"K", s.K},
          {"fourier_u", terms_to_json(s.u)},
          {"fourier_theta_x", terms_to_json(s.theta_x)},
          {"fourier_theta_y", terms_to_json(s.theta_y)}};
}

SurfaceModel load_surface(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open surface file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("surface file " + path + ": " + e.what());
  }
  return surface_from_json(j);
}

}  // namespace maglab
