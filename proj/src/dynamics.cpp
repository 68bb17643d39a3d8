#include "maglab/dynamics.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "maglab/errors.hpp"

namespace maglab {

namespace {
const Mat2 kRot = (Mat2() << 0.0, -1.0, 1.0, 0.0).finished();

struct Field {
  Vec4 F;
  Mat4 DF;
};

Field field_and_jacobian(const SurfaceModel& s, const PhasePoint& z) {
  const GeometryEval e = eval_geometry(s, z.x);
  const Vec2& v = z.v;
  const Vec2 iv = kRot * v;
  const double vv = v.squaredNorm();
  const double uv = e.du.dot(v);
  const Vec2 a = vv * e.du - 2.0 * uv * v - e.f * iv;
  Field out;
  out.F << v, a;
  const Mat2 da_dv = 2.0 * e.du * v.transpose() - 2.0 * (v * e.du.transpose() + uv * Mat2::Identity()) - e.f * kRot;
  const Mat2 da_dx = vv * e.ddu - 2.0 * v * (e.ddu * v).transpose() - iv * e.df.transpose();
  out.DF.setZero();
  out.DF.block<2, 2>(0, 2) = Mat2::Identity();
  out.DF.block<2, 2>(2, 0) = da_dx;
  out.DF.block<2, 2>(2, 2) = da_dv;
  return out;
}

void project_to_energy(const SurfaceModel& s, PhasePoint& z, double E0) {
  const double E = energy(s, z);
  if (E > 0.0) z.v *= std::sqrt(E0 / E);
}

int steps_for(double t, double dt) { return std::max(1, static_cast<int>(std::ceil(std::abs(t) / dt - 1e-9))); }
}  // namespace

Vec4 pack(const PhasePoint& z) { return (Vec4() << z.x, z.v).finished(); }
PhasePoint unpack(const Vec4& y) { return {y.head<2>(), y.tail<2>()}; }

double energy(const SurfaceModel& s, const PhasePoint& z) {
  return 0.5 * std::exp(2.0 * s.u.value(z.x)) * z.v.squaredNorm();
}

CotangentPoint legendre(const SurfaceModel& s, const PhasePoint& z) {
  const PointData d = eval_point(s, z.x);
  return {z.x, d.G * z.v + d.theta};
}

PhasePoint legendre_inverse(const SurfaceModel& s, const CotangentPoint& q) {
  const PointData d = eval_point(s, q.x);
  return {q.x, (q.p - d.theta) / d.G};
}

double hamiltonian(const SurfaceModel& s, const CotangentPoint& q) {
  const PointData d = eval_point(s, q.x);
  return 0.5 * (q.p - d.theta).squaredNorm() / d.G;
}

Vec2 acceleration(const SurfaceModel& s, const Vec2& x, const Vec2& v) {
  const GeometryEval e = eval_geometry(s, x);
  return v.squaredNorm() * e.du - 2.0 * e.du.dot(v) * v - e.f * (kRot * v);
}

Vec4 flow_field(const SurfaceModel& s, const PhasePoint& z) {
  return (Vec4() << z.v, acceleration(s, z.x, z.v)).finished();
}

Mat4 flow_jacobian(const SurfaceModel& s, const PhasePoint& z) { return field_and_jacobian(s, z).DF; }

Mat4 legendre_jacobian(const SurfaceModel& s, const PhasePoint& z) {
  const PointDerivs d = eval_derivs(s, z.x);
  Mat4 L = Mat4::Zero();
  L.block<2, 2>(0, 0) = Mat2::Identity();
  L.block<2, 2>(2, 0) = z.v * d.dG.transpose() + d.dtheta;
  L.block<2, 2>(2, 2) = d.G * Mat2::Identity();
  return L;
}

Vec4 hamiltonian_vector(const SurfaceModel& s, const PhasePoint& z) {
  return legendre_jacobian(s, z) * flow_field(s, z);
}

const Mat4& symplectic_J() {
  static const Mat4 J = [] {
    Mat4 m = Mat4::Zero();
    m.block<2, 2>(0, 2) = -Mat2::Identity();
    m.block<2, 2>(2, 0) = Mat2::Identity();
    return m;
  }();
  return J;
}

double omega(const Vec4& a, const Vec4& b) { return a.dot(symplectic_J() * b); }

PhasePoint rk4(const SurfaceModel& s, const PhasePoint& z0, double t, int steps, bool project_energy) {
  const double h = t / steps;
  const double E0 = project_energy ? energy(s, z0) : 0.0;
  Vec4 y = pack(z0);
  for (int i = 0; i < steps; ++i) {
    const Vec4 k1 = flow_field(s, unpack(y));
    const Vec4 k2 = flow_field(s, unpack(y + 0.5 * h * k1));
    const Vec4 k3 = flow_field(s, unpack(y + 0.5 * h * k2));
    const Vec4 k4 = flow_field(s, unpack(y + h * k3));
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (project_energy) {
      PhasePoint z = unpack(y);
      project_to_energy(s, z, E0);
      y = pack(z);
    }
  }
  return unpack(y);
}

PhasePoint rk4_variational(const SurfaceModel& s, const PhasePoint& z0, double t, int steps, Mat4& phi) {
  const double h = t / steps;
  Vec4 y = pack(z0);
  phi.setIdentity();
  for (int i = 0; i < steps; ++i) {
    const Field f1 = field_and_jacobian(s, unpack(y));
    const Mat4 p1 = f1.DF * phi;
    const Field f2 = field_and_jacobian(s, unpack(y + 0.5 * h * f1.F));
    const Mat4 p2 = f2.DF * (phi + 0.5 * h * p1);
    const Field f3 = field_and_jacobian(s, unpack(y + 0.5 * h * f2.F));
    const Mat4 p3 = f3.DF * (phi + 0.5 * h * p2);
    const Field f4 = field_and_jacobian(s, unpack(y + h * f3.F));
    const Mat4 p4 = f4.DF * (phi + h * p3);
    y += (h / 6.0) * (f1.F + 2.0 * f2.F + 2.0 * f3.F + f4.F);
    phi += (h / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
  }
  return unpack(y);
}

PhasePoint integrate_flow(const SurfaceModel& s, const PhasePoint& z, double t, const StepControl& ctl) {
  const double E0 = energy(s, z);
  double dt = ctl.dt;
  while (true) {
    const int steps = steps_for(t, dt);
    const PhasePoint out = rk4(s, z, t, steps, ctl.project_energy);
    const Vec4 y = pack(out);
    const double E = energy(s, out);
    const bool finite = y.allFinite() && std::isfinite(E);
    const double drift = E0 > 0.0 ? std::abs(E - E0) / E0 : std::abs(E);
    if (finite && drift <= ctl.drift_cap) return out;
    dt *= 0.5;
    if (dt < ctl.min_dt)
      throw NumericalError("step-underflow",
                           fmt::format("stiff segment from ({:.6g}, {:.6g}) over time {:.6g}", z.x.x(), z.x.y(), t));
  }
}

std::vector<FlowSample> trajectory(const SurfaceModel& s, const PhasePoint& z0, double t, int steps, int every,
                                   bool project_energy) {
  const double h = t / steps;
  std::vector<FlowSample> out;
  out.push_back({0.0, z0, energy(s, z0)});
  PhasePoint z = z0;
  for (int i = 1; i <= steps; ++i) {
    z = rk4(s, z, h, 1, project_energy);
    if (i % every == 0 || i == steps) out.push_back({i * h, z, energy(s, z)});
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<FlowSample>& samples) {
  out << "t,x,y,v_x,v_y,E\n";
  for (const auto& s : samples)
    out << fmt::format("{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n", s.t, s.z.x.x(), s.z.x.y(), s.z.v.x(),
                       s.z.v.y(), s.E);
}

Monodromy linearize_flow(const SurfaceModel& s, const Orbit& orbit) {
  const int K = orbit.segments();
  const double h = orbit.T / K;
  Mat4 Mt = Mat4::Identity();
  for (int k = 0; k < K; ++k) {
    Mat4 phi;
    rk4_variational(s, orbit.nodes[k], h, orbit.steps_per_segment, phi);
    Mt = phi * Mt;
  }
  if (!Mt.allFinite() || Mt.cwiseAbs().maxCoeff() > 1e12)
    throw NumericalError("propagation-blowup", "variational equations did not stay bounded");
  const Mat4 L = legendre_jacobian(s, orbit.z0);
  Monodromy m;
  m.M_tangent = Mt;
  m.M = L * Mt * L.inverse();
  m.base = orbit.z0;
  m.T = orbit.T;
  return m;
}

PhasePoint orbit_state(const SurfaceModel& s, const Orbit& orbit, double t) {
  const int K = orbit.segments();
  const double h = orbit.T / K;
  int k = static_cast<int>(std::floor(t / h));
  k = std::clamp(k, 0, K - 1);
  const double rest = t - k * h;
  if (rest == 0.0) return orbit.nodes[k];
  const int steps = std::max(1, static_cast<int>(std::ceil(orbit.steps_per_segment * rest / h)));
  return rk4(s, orbit.nodes[k], rest, steps);
}

std::vector<PhasePoint> sample_orbit(const SurfaceModel& s, const Orbit& orbit, int n) {
  std::vector<PhasePoint> out(n);
  for (int j = 0; j < n; ++j) out[j] = orbit_state(s, orbit, orbit.T * j / n);
  return out;
}

double orbit_action(const SurfaceModel& s, const Orbit& orbit) {
  auto lag = [&](const Vec4& y) {
    const PointData d = eval_point(s, y.head<2>());
    const Vec2 v = y.tail<2>();
    return 0.5 * d.G * v.squaredNorm() + d.theta.dot(v) + orbit.kappa;
  };
  const int K = orbit.segments();
  const double h = orbit.T / K / orbit.steps_per_segment;
  double S = 0.0;
  for (int k = 0; k < K; ++k) {
    Vec4 y = pack(orbit.nodes[k]);
    for (int i = 0; i < orbit.steps_per_segment; ++i) {
      const Vec4 k1 = flow_field(s, unpack(y));
      const Vec4 y2 = y + 0.5 * h * k1;
      const Vec4 k2 = flow_field(s, unpack(y2));
      const Vec4 y3 = y + 0.5 * h * k2;
      const Vec4 k3 = flow_field(s, unpack(y3));
      const Vec4 y4 = y + h * k3;
      const Vec4 k4 = flow_field(s, unpack(y4));
      S += (h / 6.0) * (lag(y) + 2.0 * lag(y2) + 2.0 * lag(y3) + lag(y4));
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return S;
}

double orbit_energy_error(const SurfaceModel& s, const Orbit& orbit, int samples) {
  double worst = 0.0;
  for (const auto& z : sample_orbit(s, orbit, samples))
    worst = std::max(worst, std::abs(energy(s, z) - orbit.kappa) / orbit.kappa);
  return worst;
}

double orbit_defect(const SurfaceModel& s, const Orbit& orbit) {
  const int K = orbit.segments();
  const double h = orbit.T / K;
  double worst = 0.0;
  for (int k = 0; k < K; ++k) {
    const PhasePoint end = rk4(s, orbit.nodes[k], h, orbit.steps_per_segment);
    PhasePoint target = orbit.nodes[(k + 1) % K];
    if (k == K - 1) target.x += orbit.winding.cast<double>();
    worst = std::max(worst, (pack(end) - pack(target)).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace maglab
