#include <cmath>

#include <Eigen/QR>

#include "maglab/errors.hpp"
#include "maglab/minimax.hpp"

namespace maglab {

namespace {
int steps_for(double h, double dt) { return std::max(16, static_cast<int>(std::ceil(h / dt))); }

double energy_residual(const SurfaceModel& s, const PhasePoint& z, double kappa) { return energy(s, z) - kappa; }
}  // namespace

Orbit refine_from_nodes(const SurfaceModel& s, std::vector<PhasePoint> nodes, double T, const Vec2i& winding,
                        double kappa, const RefineOptions& opt, int* newton_steps) {
  const int K = static_cast<int>(nodes.size());
  if (K < 1 || !(T > 0.0)) throw NumericalError("newton-divergence", "invalid shooting seed");
  const int steps = opt.steps_per_segment > 0 ? opt.steps_per_segment : steps_for(T / K, opt.dt);
  const PhasePoint anchor = opt.phase_ref ? *opt.phase_ref : nodes[0];
  const Vec4 zref = pack(anchor);
  const Vec4 Fref = flow_field(s, anchor);
  const Vec4 shift = (Vec4() << winding.cast<double>(), 0.0, 0.0).finished();
  const int rows = 4 * K + 2, cols = 4 * K + 1;

  auto residual = [&](const std::vector<PhasePoint>& z, double TT, std::vector<PhasePoint>* ends,
                      std::vector<Mat4>* phis) {
    Eigen::VectorXd R(rows);
    for (int k = 0; k < K; ++k) {
      PhasePoint end;
      if (phis) {
        Mat4 phi;
        end = rk4_variational(s, z[k], TT / K, steps, phi);
        (*phis)[k] = phi;
      } else {
        end = rk4(s, z[k], TT / K, steps);
      }
      if (ends) (*ends)[k] = end;
      Vec4 target = pack(z[(k + 1) % K]);
      if (k == K - 1) target += shift;
      R.segment<4>(4 * k) = pack(end) - target;
    }
    R[4 * K] = energy_residual(s, z[0], kappa);
    R[4 * K + 1] = (pack(z[0]) - zref).dot(Fref);
    return R;
  };
  auto done = [&](const Eigen::VectorXd& R) {
    return R.head(4 * K).cwiseAbs().maxCoeff() <= opt.tol && std::abs(R[4 * K]) <= opt.tol * std::max(1.0, kappa);
  };

  std::vector<PhasePoint> ends(K);
  std::vector<Mat4> phis(K);
  Eigen::VectorXd R = residual(nodes, T, &ends, &phis);
  int it = 0, stalled = 0;
  for (; !done(R); ++it) {
    if (it >= opt.max_iter || !R.allFinite())
      throw NumericalError("newton-divergence", "shooting Newton did not converge");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(rows, cols);
    for (int k = 0; k < K; ++k) {
      J.block<4, 4>(4 * k, 4 * k) += phis[k];
      J.block<4, 4>(4 * k, 4 * ((k + 1) % K)) -= Mat4::Identity();
      J.block<4, 1>(4 * k, 4 * K) = flow_field(s, ends[k]) / K;
    }
    const PointDerivs d = eval_derivs(s, nodes[0].x);
    const Vec2 v = nodes[0].v;
    J.block<1, 2>(4 * K, 0) = 0.5 * v.squaredNorm() * d.dG.transpose();
    J.block<1, 2>(4 * K, 2) = d.G * v.transpose();
    J.block<1, 4>(4 * K + 1, 0) = Fref.transpose();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(J.rows(), J.cols());
    cod.setThreshold(1e-10);
    cod.compute(J);
    const Eigen::VectorXd step = cod.solve(-R);

    auto try_step = [&](const Eigen::VectorXd& delta, int halvings) {
      double a = 1.0;
      for (int ls = 0; ls < halvings; ++ls, a *= 0.5) {
        std::vector<PhasePoint> trial(K);
        for (int k = 0; k < K; ++k) trial[k] = unpack(pack(nodes[k]) + a * delta.segment<4>(4 * k));
        const double Tt = T + a * delta[4 * K];
        if (!(Tt > 0.0)) continue;
        const Eigen::VectorXd Rt = residual(trial, Tt, nullptr, nullptr);
        if (Rt.allFinite() && Rt.norm() < R.norm()) {
          nodes = std::move(trial);
          T = Tt;
          return true;
        }
      }
      return false;
    };
    bool accepted = try_step(step, 10);
    // near a degenerate orbit the truncated step can miss descent; damped Gauss-Newton
    if (!accepted) {
      const Eigen::MatrixXd JtJ = J.transpose() * J;
      const Eigen::VectorXd g = J.transpose() * R;
      const double scale = JtJ.diagonal().maxCoeff();
      for (double lam = 1e-12 * scale; !accepted && lam <= 1e4 * scale; lam *= 10.0) {
        Eigen::MatrixXd A = JtJ;
        A.diagonal().array() += lam;
        accepted = try_step(A.ldlt().solve(-g), 1);
      }
    }
    if (!accepted) throw NumericalError("newton-divergence", "shooting Newton line search failed");
    const double before = R.norm();
    R = residual(nodes, T, &ends, &phis);
    // an extra conserved quantity that RK4 only keeps to O(h^4) leaves a residual floor
    stalled = R.norm() > 0.9 * before ? stalled + 1 : 0;
    if (stalled >= 3 && R.head(4 * K).cwiseAbs().maxCoeff() <= opt.stall_tol &&
        std::abs(R[4 * K]) <= opt.stall_tol * std::max(1.0, kappa)) {
      ++it;
      break;
    }
  }
  if (newton_steps) *newton_steps = it;

  Orbit o;
  o.z0 = nodes[0];
  o.T = T;
  o.kappa = kappa;
  o.winding = winding;
  o.nodes = std::move(nodes);
  o.steps_per_segment = steps;
  o.residual = R.head(4 * K).cwiseAbs().maxCoeff();
  return o;
}

Orbit refine_orbit(const SurfaceModel& s, const Loop& l, double kappa, const RefineOptions& opt, int* newton_steps) {
  const int K = opt.segments;
  const int per = std::max(2, (l.size() + K - 1) / K);
  const Loop u = resample_uniform(l, K * per);
  const int n = u.size();
  const double h = u.T / n;
  std::vector<PhasePoint> nodes(K);
  for (int k = 0; k < K; ++k) {
    const int j = k * per;
    const Vec2 prev = j == 0 ? u.x[n - 1] - u.winding.cast<double>() : u.x[j - 1];
    Vec2 v = (u.node(j + 1) - prev) / (2 * h);
    const double E = 0.5 * eval_point(s, u.x[j]).G * v.squaredNorm();
    if (E > 0.0) v *= std::sqrt(kappa / E);
    nodes[k] = {u.x[j], v};
  }
  return refine_from_nodes(s, std::move(nodes), u.T, u.winding, kappa, opt, newton_steps);
}

Orbit refine_orbit(const SurfaceModel& s, const Orbit& seed, double kappa, const RefineOptions& opt,
                   int* newton_steps) {
  if (seed.kappa == kappa && seed.residual <= opt.tol && orbit_defect(s, seed) <= opt.tol &&
      std::abs(energy(s, seed.z0) - kappa) <= opt.tol * std::max(1.0, kappa)) {
    if (newton_steps) *newton_steps = 0;
    return seed;
  }
  RefineOptions o = opt;
  if (o.steps_per_segment <= 0) o.dt = seed.T / seed.segments() / std::max(1, seed.steps_per_segment);
  return refine_from_nodes(s, seed.nodes, seed.T, seed.winding, kappa, o, newton_steps);
}

nlohmann::json orbit_to_json(const Orbit& o) {
  auto pt = [](const PhasePoint& z) { return nlohmann::json::array({z.x.x(), z.x.y(), z.v.x(), z.v.y()}); };
  nlohmann::json j;
  j["T"] = o.T;
  j["kappa"] = o.kappa;
  j["winding"] = {o.winding.x(), o.winding.y()};
  j["residual"] = o.residual;
  j["steps_per_segment"] = o.steps_per_segment;
  auto nodes = nlohmann::json::array();
  for (const auto& z : o.nodes) nodes.push_back(pt(z));
  j["nodes"] = nodes;
  return j;
}

Orbit orbit_from_json(const nlohmann::json& j) {
  Orbit o;
  try {
    o.T = j.at("T").get<double>();
    o.kappa = j.at("kappa").get<double>();
    o.winding = Vec2i(j.at("winding").at(0).get<int>(), j.at("winding").at(1).get<int>());
    o.residual = j.value("residual", 0.0);
    o.steps_per_segment = j.at("steps_per_segment").get<int>();
    for (const auto& n : j.at("nodes")) {
      if (n.size() != 4) throw ConfigError("orbit: nodes are [x, y, v_x, v_y]");
      o.nodes.push_back({Vec2(n[0].get<double>(), n[1].get<double>()), Vec2(n[2].get<double>(), n[3].get<double>())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("orbit: ") + e.what());
  }
  if (o.nodes.empty() || !(o.T > 0.0) || !(o.kappa > 0.0) || o.steps_per_segment < 1)
    throw ConfigError("orbit: needs nodes, positive T, kappa and steps_per_segment");
  o.z0 = o.nodes[0];
  return o;
}

}  // namespace maglab
