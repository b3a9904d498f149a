#pragma once

#include "inspectsim/geometry.hpp"
#include "inspectsim/qp.hpp"

#include <optional>
#include <vector>

namespace inspectsim {

using Mat37 = Eigen::Matrix<double, 3, 7>;
using Mat7 = Eigen::Matrix<double, 7, 7>;
using Mat73 = Eigen::Matrix<double, 7, 3>;
using XBar = Eigen::Matrix<double, 7, 1>;

class ControlError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// MPC infeasible after slack relaxation; carries the violated row.
class MpcInfeasibleError : public ControlError {
public:
  MpcInfeasibleError(const std::string& what, int row) : ControlError(what), violated_row(row) {}
  int violated_row;
};

/// Solver hit max iterations; carries the last residuals.
class MpcNoConvergenceError : public ControlError {
public:
  MpcNoConvergenceError(const std::string& what, double rp, double rd)
      : ControlError(what), primal_residual(rp), dual_residual(rd) {}
  double primal_residual;
  double dual_residual;
};

/// Double-integrator platform state in the global frame.
struct PlatformState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

/// Exact step of p' = p + Ts v + 0.5 Ts^2 u, v' = v + Ts u.
PlatformState platform_step(const PlatformState& x, const Vec3& u, double ts);

/// Homogeneous lift [p; 1; v] used by the 3x7 tracking matrix.
XBar lift(const PlatformState& x);
PlatformState unlift(const XBar& xbar);
Mat7 lifted_a(double ts);
Mat73 lifted_b(double ts);

enum class NormType { Two, Inf };

struct Bounds {
  double v_max = 3.0;
  double u_max = 0.5;
  NormType b = NormType::Inf;
};

/// Sweep-boundary bookkeeping for the inspection round counter. The
/// latch enforces a hysteresis band so grazing the boundary cannot
/// double-increment.
struct Boundary {
  bool enabled = false;
  Vec3 direction = Vec3::UnitX();
  double lo = -kInf;
  double hi = kInf;
  double hysteresis = 0.5;
  bool latched = false;
};

/// Inspection preferences: separation distance, zig-zag pattern and
/// reference speed, plus platform limits.
struct InspectionSpec {
  double d_s = 10.0;       ///< separation distance (m)
  double d_0 = 5.0;        ///< initial sweep displacement (m)
  double d_c = 2.0;        ///< displacement between rounds (m)
  Vec3 n_c = Vec3::UnitZ();///< sweep increment direction (unit)
  double v_r = 1.0;        ///< reference speed (m/s)
  int n_a = 0;             ///< inspection round counter
  Boundary boundary;
  Bounds bounds;
};

/// Increments n_a exactly once per boundary exit of direction.p, with
/// hysteresis re-arming. No-op when the boundary is not configured.
InspectionSpec advance_reference(const InspectionSpec& spec, const Vec3& p);

struct ControllerConfig {
  Vec3 q_weights = Vec3(10.0, 10.0, 5.0);
  Vec3 r_weights = Vec3(1.0, 1.0, 1.0);
  int horizon = 20;
  double ts = 0.1;
  double terminal_eps = 0.05;
  double terminal_weight = 1e4;
  /// Eq-sign variant of the compensation control; the negated form is the
  /// one that preserves the terminal residual (see compensation_control).
  bool comp_negated = true;
  /// Budget the estimate-update compensation over the whole horizon
  /// instead of a single step. The single-step rule is far more
  /// conservative (position authority scales with Ts^2 vs (N Ts)^2).
  bool comp_over_horizon = true;
  /// Fraction of u_max reserved for the horizon-budgeted compensation.
  double comp_budget_frac = 0.3;
  double gamma_floor = 1e-4;
  std::optional<double> d_ref_override;
  QpSettings qp;
};

/// Constant-reference tracking problem: 3x7 output matrix C, reference
/// c_r and quadratic weights.
struct TrackingProblem {
  Mat37 c_matrix = Mat37::Zero();
  Vec3 c_r = Vec3::Zero();
  Vec3 q_weights = Vec3::Zero();
  Vec3 r_weights = Vec3::Zero();
  int horizon = 20;
  double ts = 0.1;
  double terminal_eps = 0.05;
  double terminal_weight = 1e4;
};

/// Rows of C: [n_o', d_o, 0], [n_c', 0, 0], [0, 0, n_p'] with
/// n_p = normalize(n_c x n_o); c_r = [d_s, n_a d_c + d_0, (-1)^n_a v_r].
/// Throws on n_c parallel to the plane normal.
TrackingProblem build_tracking(const Plane& plane_g, const InspectionSpec& spec,
                               const ControllerConfig& cfg);

/// e = C [p; 1; v] - c_r: separation, sweep-displacement and velocity errors.
Vec3 tracking_error(const TrackingProblem& prob, const PlatformState& x);

struct MpcDiagnostics {
  double objective = 0.0;
  int iterations = 0;
  QpStatus status = QpStatus::Solved;
  double constraint_violation = 0.0;
  double terminal_slack = 0.0;
  bool polished = false;
};

struct MpcSolution {
  std::vector<Vec3> controls;         ///< u_0 .. u_{N-1}
  std::vector<PlatformState> states;  ///< x_1 .. x_N predicted
  MpcDiagnostics diag;
};

/// Receding-horizon QP: minimizes sum_t |C xbar_t - c_r|_Q^2 + |u_t|_R^2
/// over the condensed control vector, subject to velocity/control bounds
/// (inscribed box for the 2-norm) and a terminal eps-ball enforced
/// through nonnegative slacks weighted by terminal_weight.
/// Throws MpcInfeasibleError / MpcNoConvergenceError.
MpcSolution solve_mpc(const PlatformState& x, const TrackingProblem& prob, const Bounds& bounds,
                      const QpSettings& qp_settings = {},
                      const std::optional<QpWarmStart>& warm = std::nullopt,
                      QpWarmStart* warm_out = nullptr);

/// Control of the recursive-feasibility argument: the input that maps the
/// previous terminal residual to the new output matrix after an estimate
/// update C_k -> C_k + dC. The negated variant satisfies
///   (C_k + dC)(A xbar + B u) = C_k A xbar
/// exactly; the as-printed variant flips the sign of u. Throws
/// ControlError when (C_k + dC) B is singular (3x3 determinant <= 1e-10).
Vec3 compensation_control(const Mat37& c_k, const Mat37& d_c, const XBar& xbar, double ts,
                          bool negated = true);

/// Same re-centering demand spread over n_steps as a constant control:
/// uses the n-step reachability matrix in place of B.
Vec3 compensation_control_over_horizon(const Mat37& c_k, const Mat37& d_c, const XBar& xbar,
                                       double ts, int n_steps, bool negated = true);

/// Sampled (rate-limited) estimate fed to the controller.
struct SampledEstimate {
  Vec3 chi_s = Vec3::Zero();
  double last_gamma = 1.0;
};

struct GammaResult {
  double gamma = 0.0;
  bool stalled = false;  ///< predicate failed even at gamma_floor
};

/// Largest gamma in [0,1] (64-point grid + bisection refinement) for
/// which the compensation control of the gamma-blended estimate stays
/// within the configured budget. Returns 1 whenever the full update is
/// feasible; 0 with stalled=true when even gamma_floor fails.
GammaResult max_feasible_gamma(const SampledEstimate& s_est, const Vec3& chi_new,
                               const XBar& xbar, const RigidTransform& camera_pose,
                               const InspectionSpec& spec, const ControllerConfig& cfg);

/// chi_s + gamma (chi_new - chi_s); exact convex combination.
SampledEstimate sample_update(const SampledEstimate& s_est, const Vec3& chi_new, double gamma);

/// Output matrix for a camera-frame chi: plane recovered by
/// plane_estimate, transferred to the global frame through the camera
/// pose, then assembled as in build_tracking. Empty on degenerate
/// geometry (chi below floor or n_c parallel to the normal).
std::optional<Mat37> tracking_matrix_from_chi(const Vec3& chi_cam, const RigidTransform& pose,
                                              const InspectionSpec& spec);

}  // namespace inspectsim
