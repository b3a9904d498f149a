#pragma once

#include <Eigen/Dense>

#include <limits>
#include <optional>
#include <string>

namespace inspectsim {

/// Convex QP in the form
///   minimize    0.5 z'Pz + q'z
///   subject to  lo <= Az <= hi
/// with P symmetric positive semidefinite.
struct QpProblem {
  Eigen::MatrixXd P;
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int num_vars() const { return static_cast<int>(P.rows()); }
  int num_cons() const { return static_cast<int>(A.rows()); }
};

struct QpSettings {
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  /// Plateau acceptance: a run that exhausts max_iter but sits inside
  /// these residual levels is still returned as solved (unpolished).
  double eps_accept_abs = 1e-4;
  double eps_accept_rel = 1e-4;
  double eps_infeasible = 1e-10;
  int max_iter = 20000;
  int check_every = 25;
  int rho_update_every = 100;
  bool adaptive_rho = true;
  bool scale = true;
  int scaling_iters = 5;
  bool polish = true;
  double polish_reg = 1e-9;
};

enum class QpStatus {
  Solved,
  MaxIterations,
  PrimalInfeasible,
  DualInfeasible,
};

struct QpResult {
  Eigen::VectorXd z;
  Eigen::VectorXd y;  ///< constraint multipliers
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double primal_residual = std::numeric_limits<double>::quiet_NaN();
  double dual_residual = std::numeric_limits<double>::quiet_NaN();
  bool polished = false;
  /// Index of a maximally violated constraint row when infeasible, else -1.
  int violated_row = -1;
};

struct QpWarmStart {
  Eigen::VectorXd z;
  Eigen::VectorXd y;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Operator-splitting solve with optional active-set polish. Deterministic:
/// fixed iteration order, no randomization.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                  const std::optional<QpWarmStart>& warm = std::nullopt);

}  // namespace inspectsim
