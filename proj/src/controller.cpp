#include "inspectsim/controller.hpp"

#include "inspectsim/observer.hpp"

#include <cmath>
#include <cstdio>

namespace inspectsim {

PlatformState platform_step(const PlatformState& x, const Vec3& u, double ts) {
  if (!(ts > 0.0)) throw std::invalid_argument("platform_step: ts must be > 0");
  PlatformState out;
  out.p = x.p + ts * x.v + 0.5 * ts * ts * u;
  out.v = x.v + ts * u;
  return out;
}

XBar lift(const PlatformState& x) {
  XBar xbar;
  xbar << x.p, 1.0, x.v;
  return xbar;
}

PlatformState unlift(const XBar& xbar) {
  PlatformState x;
  x.p = xbar.head<3>();
  x.v = xbar.tail<3>();
  return x;
}

Mat7 lifted_a(double ts) {
  Mat7 a = Mat7::Identity();
  a.block<3, 3>(0, 4) = ts * Mat3::Identity();
  return a;
}

Mat73 lifted_b(double ts) {
  Mat73 b = Mat73::Zero();
  b.block<3, 3>(0, 0) = 0.5 * ts * ts * Mat3::Identity();
  b.block<3, 3>(4, 0) = ts * Mat3::Identity();
  return b;
}

InspectionSpec advance_reference(const InspectionSpec& spec, const Vec3& p) {
  InspectionSpec out = spec;
  if (!spec.boundary.enabled) return out;
  const double s = spec.boundary.direction.dot(p);
  const double h = spec.boundary.hysteresis;
  if (!out.boundary.latched) {
    if (s > spec.boundary.hi || s < spec.boundary.lo) {
      out.n_a += 1;
      out.boundary.latched = true;
    }
  } else {
    if (s >= spec.boundary.lo + h && s <= spec.boundary.hi - h) {
      out.boundary.latched = false;
    }
  }
  return out;
}

namespace {

constexpr double kParallelTol = 1e-6;

std::optional<Mat37> make_c_matrix(const Plane& plane_g, const Vec3& n_c) {
  const Vec3 cross = n_c.cross(plane_g.n);
  const double cn = cross.norm();
  if (cn < kParallelTol) return std::nullopt;
  const Vec3 n_p = cross / cn;
  Mat37 c = Mat37::Zero();
  c.block<1, 3>(0, 0) = plane_g.n.transpose();
  c(0, 3) = plane_g.d;
  c.block<1, 3>(1, 0) = n_c.transpose();
  c.block<1, 3>(2, 4) = n_p.transpose();
  return c;
}

double norm_b(const Vec3& u, NormType b) {
  return b == NormType::Inf ? u.cwiseAbs().maxCoeff() : u.norm();
}

Vec3 comp_with_timescale(const Mat37& c_k, const Mat37& d_c, const XBar& xbar, double ts_eff,
                         bool negated) {
  const Mat73 b = lifted_b(ts_eff);
  const Mat7 a = lifted_a(ts_eff);
  const Mat3 m = (c_k + d_c) * b;
  if (std::abs(m.determinant()) <= 1e-10) {
    throw ControlError("compensation_control: singular (C B) system");
  }
  const Vec3 rhs = d_c * (a * xbar);
  const Vec3 u = m.inverse() * rhs;
  return negated ? Vec3(-u) : u;
}

}  // namespace

TrackingProblem build_tracking(const Plane& plane_g, const InspectionSpec& spec,
                               const ControllerConfig& cfg) {
  // The plane is used in the orientation it is given (the caller picks the
  // observer-side gauge); only the normal length is fixed up.
  const double norm = plane_g.n.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw ControlError("build_tracking: invalid plane normal");
  }
  const Plane plane{plane_g.n / norm, plane_g.d / norm};
  auto c = make_c_matrix(plane, spec.n_c);
  if (!c) throw ControlError("build_tracking: sweep direction parallel to plane normal");
  TrackingProblem prob;
  prob.c_matrix = *c;
  const double d_ref = cfg.d_ref_override.value_or(spec.d_s);
  const double z_ref = spec.n_a * spec.d_c + spec.d_0;
  const double v_ref = (spec.n_a % 2 == 0 ? 1.0 : -1.0) * spec.v_r;
  prob.c_r = Vec3(d_ref, z_ref, v_ref);
  prob.q_weights = cfg.q_weights;
  prob.r_weights = cfg.r_weights;
  prob.horizon = cfg.horizon;
  prob.ts = cfg.ts;
  prob.terminal_eps = cfg.terminal_eps;
  prob.terminal_weight = cfg.terminal_weight;
  return prob;
}

Vec3 tracking_error(const TrackingProblem& prob, const PlatformState& x) {
  return prob.c_matrix * lift(x) - prob.c_r;
}

MpcSolution solve_mpc(const PlatformState& x, const TrackingProblem& prob, const Bounds& bounds,
                      const QpSettings& qp_settings, const std::optional<QpWarmStart>& warm,
                      QpWarmStart* warm_out) {
  const int n = prob.horizon;
  if (n < 1) throw std::invalid_argument("solve_mpc: horizon must be >= 1");
  const double ts = prob.ts;
  const int nu = 3 * n;
  const int nz = nu + 3;

  const double scale = bounds.b == NormType::Two ? 1.0 / std::sqrt(3.0) : 1.0;
  const double u_eff = bounds.u_max * scale;
  const double v_eff = bounds.v_max * scale;

  const Mat7 a = lifted_a(ts);
  const Mat73 b = lifted_b(ts);
  const Mat3 q = prob.q_weights.asDiagonal();

  // Condensed tracking quadratic over the stacked control vector.
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(nu, nu);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(nu);
  double j_const = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int ax = 0; ax < 3; ++ax) h(3 * i + ax, 3 * i + ax) += prob.r_weights[ax];
  }

  Eigen::Matrix<double, 7, Eigen::Dynamic> s_mat(7, nu);
  s_mat.setZero();
  XBar free_state = lift(x);
  Eigen::MatrixXd g_terminal;
  Eigen::Vector3d e_terminal_free = Vec3::Zero();
  for (int t = 1; t <= n; ++t) {
    // s_mat <- A s_mat; then add B at block t-1.
    s_mat = a * s_mat;
    s_mat.block<7, 3>(0, 3 * (t - 1)) += b;
    free_state = a * free_state;
    const Eigen::Matrix<double, 3, Eigen::Dynamic> g_t = prob.c_matrix * s_mat;
    const Vec3 e_free = prob.c_matrix * free_state - prob.c_r;
    h += g_t.transpose() * q * g_t;
    f += g_t.transpose() * q * e_free;
    j_const += e_free.dot(q * e_free);
    if (t == n) {
      g_terminal = g_t;
      e_terminal_free = e_free;
    }
  }

  QpProblem qp;
  qp.P = Eigen::MatrixXd::Zero(nz, nz);
  qp.P.topLeftCorner(nu, nu) = 2.0 * h;
  qp.P.bottomRightCorner(3, 3) = 2.0 * prob.terminal_weight * Mat3::Identity();
  qp.q = Eigen::VectorXd::Zero(nz);
  qp.q.head(nu) = 2.0 * f;

  const int m_rows = 2 * nu + 6 + 3;
  qp.A = Eigen::MatrixXd::Zero(m_rows, nz);
  qp.lo = Eigen::VectorXd::Constant(m_rows, -kInf);
  qp.hi = Eigen::VectorXd::Constant(m_rows, kInf);

  // Control box.
  for (int i = 0; i < nu; ++i) {
    qp.A(i, i) = 1.0;
    qp.lo[i] = -u_eff;
    qp.hi[i] = u_eff;
  }
  // Velocity bounds: v_t = v_0 + ts * sum_{j<t} u_j.
  for (int t = 1; t <= n; ++t) {
    for (int ax = 0; ax < 3; ++ax) {
      const int row = nu + 3 * (t - 1) + ax;
      for (int j = 0; j < t; ++j) qp.A(row, 3 * j + ax) = ts;
      qp.lo[row] = -v_eff - x.v[ax];
      qp.hi[row] = v_eff - x.v[ax];
    }
  }
  // Terminal eps-ball with slack: |e_N_i| <= eps + sigma_i, sigma_i >= 0.
  for (int i = 0; i < 3; ++i) {
    const int row_hi = 2 * nu + 2 * i;
    qp.A.row(row_hi).head(nu) = g_terminal.row(i);
    qp.A(row_hi, nu + i) = -1.0;
    qp.hi[row_hi] = prob.terminal_eps - e_terminal_free[i];
    const int row_lo = row_hi + 1;
    qp.A.row(row_lo).head(nu) = -g_terminal.row(i);
    qp.A(row_lo, nu + i) = -1.0;
    qp.hi[row_lo] = prob.terminal_eps + e_terminal_free[i];
    const int row_sigma = 2 * nu + 6 + i;
    qp.A(row_sigma, nu + i) = 1.0;
    qp.lo[row_sigma] = 0.0;
  }

  const QpResult result = solve_qp(qp, qp_settings, warm);
  if (result.status == QpStatus::PrimalInfeasible || result.status == QpStatus::DualInfeasible) {
    std::string what = "solve_mpc: infeasible";
    if (result.violated_row >= 0) {
      if (result.violated_row < nu) {
        what += " (control bound, step " + std::to_string(result.violated_row / 3) + ")";
      } else if (result.violated_row < 2 * nu) {
        what += " (velocity bound, step " + std::to_string((result.violated_row - nu) / 3 + 1) + ")";
      } else {
        what += " (terminal condition)";
      }
    }
    throw MpcInfeasibleError(what, result.violated_row);
  }
  if (result.status == QpStatus::MaxIterations) {
    char resid_buf[96];
    std::snprintf(resid_buf, sizeof(resid_buf), "residuals %.3e primal, %.3e dual",
                  result.primal_residual, result.dual_residual);
    throw MpcNoConvergenceError(std::string("solve_mpc: solver hit max iterations (") +
                                    resid_buf + ")",
                                result.primal_residual, result.dual_residual);
  }
  if (warm_out) {
    warm_out->z = result.z;
    warm_out->y = result.y;
  }

  MpcSolution sol;
  sol.controls.resize(n);
  for (int t = 0; t < n; ++t) sol.controls[t] = result.z.segment<3>(3 * t);
  sol.states.resize(n);
  PlatformState cur = x;
  double violation = 0.0;
  for (int t = 0; t < n; ++t) {
    violation = std::max(violation, norm_b(sol.controls[t], bounds.b) - bounds.u_max);
    cur = platform_step(cur, sol.controls[t], ts);
    sol.states[t] = cur;
    violation = std::max(violation, norm_b(cur.v, bounds.b) - bounds.v_max);
  }
  sol.diag.objective = result.objective + j_const;
  sol.diag.iterations = result.iterations;
  sol.diag.status = result.status;
  sol.diag.constraint_violation = std::max(violation, 0.0);
  sol.diag.terminal_slack = result.z.tail(3).cwiseAbs().maxCoeff();
  sol.diag.polished = result.polished;
  return sol;
}

Vec3 compensation_control(const Mat37& c_k, const Mat37& d_c, const XBar& xbar, double ts,
                          bool negated) {
  return comp_with_timescale(c_k, d_c, xbar, ts, negated);
}

Vec3 compensation_control_over_horizon(const Mat37& c_k, const Mat37& d_c, const XBar& xbar,
                                       double ts, int n_steps, bool negated) {
  // Constant input over n steps has the reachability of a single step of
  // length n*ts (position 0.5 (n ts)^2, velocity n ts).
  return comp_with_timescale(c_k, d_c, xbar, ts * std::max(n_steps, 1), negated);
}

std::optional<Mat37> tracking_matrix_from_chi(const Vec3& chi_cam, const RigidTransform& pose,
                                              const InspectionSpec& spec) {
  Plane plane_c;
  try {
    plane_c = plane_estimate(chi_cam);
  } catch (const GeometryError&) {
    return std::nullopt;
  }
  const Plane plane_g = oriented_toward(transform_plane(pose, plane_c), pose.t);
  return make_c_matrix(plane_g, spec.n_c);
}

GammaResult max_feasible_gamma(const SampledEstimate& s_est, const Vec3& chi_new,
                               const XBar& xbar, const RigidTransform& camera_pose,
                               const InspectionSpec& spec, const ControllerConfig& cfg) {
  const auto c_s = tracking_matrix_from_chi(s_est.chi_s, camera_pose, spec);
  if (!c_s) return {0.0, true};

  const double budget =
      cfg.comp_over_horizon ? cfg.comp_budget_frac * spec.bounds.u_max : spec.bounds.u_max;

  auto feasible = [&](double gamma) -> bool {
    const Vec3 chi_mix = s_est.chi_s + gamma * (chi_new - s_est.chi_s);
    const auto c_mix = tracking_matrix_from_chi(chi_mix, camera_pose, spec);
    if (!c_mix) return false;
    const Mat37 d_c = *c_mix - *c_s;
    Vec3 u;
    try {
      if (cfg.comp_over_horizon) {
        u = compensation_control_over_horizon(*c_s, d_c, xbar, cfg.ts, cfg.horizon,
                                              cfg.comp_negated);
      } else {
        u = compensation_control(*c_s, d_c, xbar, cfg.ts, cfg.comp_negated);
      }
    } catch (const ControlError&) {
      return false;
    }
    return norm_b(u, spec.bounds.b) <= budget;
  };

  if (feasible(1.0)) return {1.0, false};

  constexpr int kGrid = 64;
  double lo = 0.0;
  double hi = 1.0;
  bool found = false;
  for (int i = kGrid - 1; i >= 1; --i) {
    const double g = static_cast<double>(i) / kGrid;
    if (feasible(g)) {
      lo = g;
      hi = static_cast<double>(i + 1) / kGrid;
      found = true;
      break;
    }
  }
  if (!found) {
    if (!feasible(cfg.gamma_floor)) return {0.0, true};
    lo = cfg.gamma_floor;
    hi = 1.0 / kGrid;
  }
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, false};
}

SampledEstimate sample_update(const SampledEstimate& s_est, const Vec3& chi_new, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("sample_update: gamma outside [0,1]");
  SampledEstimate out;
  out.chi_s = s_est.chi_s + gamma * (chi_new - s_est.chi_s);
  out.last_gamma = gamma;
  return out;
}

}  // namespace inspectsim
