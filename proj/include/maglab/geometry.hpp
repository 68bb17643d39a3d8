#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace maglab {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

// One term c*cos(2pi(mx+ny)) + s*sin(2pi(mx+ny)).
struct FourierTerm {
  int m = 0;
  int n = 0;
  double c = 0.0;
  double s = 0.0;
};

// Truncated double Fourier series on R^2/Z^2, differentiated term by term.
class FourierSeries {
 public:
  FourierSeries() = default;
  explicit FourierSeries(std::vector<FourierTerm> terms);

  double value(const Vec2& p) const;
  void eval(const Vec2& p, double& v, Vec2& d, Mat2& dd) const;

  const std::vector<FourierTerm>& terms() const { return terms_; }
  int max_mode() const;
  bool empty() const { return terms_.empty(); }
  FourierSeries operator*(double a) const;
  FourierSeries operator+(const FourierSeries& o) const;

 private:
  std::vector<FourierTerm> terms_;
};

// Conformally flat torus R^2/Z^2 with metric e^{2u}(dx^2+dy^2) and one-form theta.
struct SurfaceModel {
  FourierSeries u;
  FourierSeries theta_x;
  FourierSeries theta_y;
  int K = 8;

  // true when u and theta do not depend on x (translation symmetry in x)
  bool y_only() const;
  void validate() const;
};

// Pointwise geometric data. Beyond the metric, Christoffel symbols, f and theta
// it carries the derivatives needed by the flow linearization and the Hessians.
struct GeometryEval {
  Vec2 point;
  Mat2 g;
  std::array<double, 8> christoffel{};  // Gamma^k_{ij} stored at k*4 + i*2 + j
  double f = 0.0;
  Vec2 theta;
  double dtheta_density = 0.0;

  double conformal = 1.0;  // e^{2u}
  Vec2 du;
  Mat2 ddu;
  Mat2 dtheta;                   // dtheta(i, j) = d_j theta_i
  std::array<Mat2, 2> ddtheta;   // Hessian of theta_x, theta_y
  Vec2 df;
};

GeometryEval eval_geometry(const SurfaceModel& surface, const Vec2& point);

// e^{2u} and theta only; the hot path of the action functional.
struct PointData {
  double G;
  Vec2 theta;
};
PointData eval_point(const SurfaceModel& surface, const Vec2& point);

// e^{2u}, its gradient and Hessian, theta and its first two derivatives.
struct PointDerivs {
  double G;
  Vec2 dG;
  Mat2 ddG;
  Vec2 theta;
  Mat2 dtheta;  // (i, j) = d_j theta_i
  std::array<Mat2, 2> ddtheta;
};
PointDerivs eval_derivs(const SurfaceModel& surface, const Vec2& point);

// The almost complex structure: +90 degree rotation, an isometry for a conformal metric.
Vec2 rotate90(const SurfaceModel& surface, const Vec2& point, const Vec2& v);

double metric_dot(const SurfaceModel& surface, const Vec2& point, const Vec2& a, const Vec2& b);

SurfaceModel surface_from_json(const nlohmann::json& j);
nlohmann::json surface_to_json(const SurfaceModel& s);
SurfaceModel load_surface(const std::string& path);

}  // namespace maglab
