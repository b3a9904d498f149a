#include <doctest.h>

#include "inspectsim/qp.hpp"
#include "inspectsim/rng.hpp"

#include <Eigen/Dense>

using namespace inspectsim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("unconstrained qp matches the normal equations") {
  MatrixXd p(2, 2);
  p << 4, 1, 1, 2;
  VectorXd q(2);
  q << 1, 1;
  QpProblem prob{p, q, MatrixXd::Zero(0, 2), VectorXd(0), VectorXd(0)};
  const QpResult res = solve_qp(prob);
  REQUIRE(res.status == QpStatus::Solved);
  const VectorXd expected = -p.ldlt().solve(q);
  CHECK((res.z - expected).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("box-constrained qp clamps to the active bound") {
  // min (z0-3)^2 + (z1+2)^2 with |z| <= 1: optimum (1, -1).
  MatrixXd p = 2.0 * MatrixXd::Identity(2, 2);
  VectorXd q(2);
  q << -6, 4;
  QpProblem prob;
  prob.P = p;
  prob.q = q;
  prob.A = MatrixXd::Identity(2, 2);
  prob.lo = VectorXd::Constant(2, -1.0);
  prob.hi = VectorXd::Constant(2, 1.0);
  const QpResult res = solve_qp(prob);
  REQUIRE(res.status == QpStatus::Solved);
  CHECK(res.z[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(res.z[1] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(res.polished);
}

TEST_CASE("infeasible bounds are reported") {
  QpProblem prob;
  prob.P = MatrixXd::Identity(1, 1);
  prob.q = VectorXd::Zero(1);
  prob.A = MatrixXd::Identity(1, 1);
  prob.lo = VectorXd::Constant(1, 2.0);
  prob.hi = VectorXd::Constant(1, 1.0);
  const QpResult res = solve_qp(prob);
  CHECK(res.status == QpStatus::PrimalInfeasible);
  CHECK(res.violated_row == 0);
}

TEST_CASE("conflicting rows trigger the infeasibility certificate") {
  // z >= 1 and z <= -1 cannot hold together.
  QpProblem prob;
  prob.P = MatrixXd::Identity(1, 1);
  prob.q = VectorXd::Zero(1);
  prob.A = MatrixXd::Ones(2, 1);
  prob.lo.resize(2);
  prob.hi.resize(2);
  prob.lo << 1.0, -kInf;
  prob.hi << kInf, -1.0;
  const QpResult res = solve_qp(prob);
  CHECK(res.status == QpStatus::PrimalInfeasible);
}

TEST_CASE("random strictly-convex qps satisfy the kkt conditions") {
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform(0, 6));
    const int m = 1 + static_cast<int>(rng.uniform(0, 8));
    MatrixXd root(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) root(i, j) = rng.normal();
    QpProblem prob;
    prob.P = root.transpose() * root + 0.1 * MatrixXd::Identity(n, n);
    prob.q = VectorXd::NullaryExpr(n, [&](int) { return rng.normal(); });
    prob.A = MatrixXd::NullaryExpr(m, n, [&](int, int) { return rng.normal(); });
    prob.lo = VectorXd::NullaryExpr(m, [&](int) { return -std::abs(rng.normal()) - 0.1; });
    prob.hi = VectorXd::NullaryExpr(m, [&](int) { return std::abs(rng.normal()) + 0.1; });
    const QpResult res = solve_qp(prob);
    REQUIRE(res.status == QpStatus::Solved);
    const VectorXd az = prob.A * res.z;
    for (int i = 0; i < m; ++i) {
      CHECK(az[i] >= prob.lo[i] - 1e-6);
      CHECK(az[i] <= prob.hi[i] + 1e-6);
    }
    const VectorXd grad = prob.P * res.z + prob.q + prob.A.transpose() * res.y;
    CHECK(grad.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("warm starts reduce the iteration count") {
  Rng rng(7);
  const int n = 12, m = 20;
  MatrixXd root = MatrixXd::NullaryExpr(n, n, [&](int, int) { return rng.normal(); });
  QpProblem prob;
  prob.P = root.transpose() * root + MatrixXd::Identity(n, n);
  prob.q = VectorXd::NullaryExpr(n, [&](int) { return rng.normal(); });
  prob.A = MatrixXd::NullaryExpr(m, n, [&](int, int) { return rng.normal(); });
  prob.lo = VectorXd::Constant(m, -1.0);
  prob.hi = VectorXd::Constant(m, 1.0);
  const QpResult cold = solve_qp(prob);
  REQUIRE(cold.status == QpStatus::Solved);
  const QpResult hot = solve_qp(prob, {}, QpWarmStart{cold.z, cold.y});
  REQUIRE(hot.status == QpStatus::Solved);
  CHECK(hot.iterations <= cold.iterations);
  CHECK((hot.z - cold.z).cwiseAbs().maxCoeff() < 1e-6);
}
