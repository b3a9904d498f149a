#include "inspectsim/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

namespace inspectsim {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

struct Scaling {
  VectorXd d;  // variable scaling, z = d .* z_scaled
  VectorXd e;  // constraint scaling
  double c = 1.0;
};

/// Modified Ruiz equilibration of [P A'; A 0] plus cost normalization.
Scaling ruiz_scale(QpProblem& p, int iters) {
  const int n = p.num_vars();
  const int m = p.num_cons();
  Scaling s;
  s.d = VectorXd::Ones(n);
  s.e = VectorXd::Ones(m);

  for (int it = 0; it < iters; ++it) {
    VectorXd dn(n), en(m);
    for (int j = 0; j < n; ++j) {
      double col = p.P.col(j).cwiseAbs().maxCoeff();
      if (m) col = std::max(col, p.A.col(j).cwiseAbs().maxCoeff());
      dn[j] = col > 0 ? 1.0 / std::sqrt(col) : 1.0;
    }
    for (int i = 0; i < m; ++i) {
      double row = p.A.row(i).cwiseAbs().maxCoeff();
      en[i] = row > 0 ? 1.0 / std::sqrt(row) : 1.0;
    }
    p.P = dn.asDiagonal() * p.P * dn.asDiagonal();
    p.q = dn.asDiagonal() * p.q;
    if (m) {
      p.A = en.asDiagonal() * p.A * dn.asDiagonal();
      for (int i = 0; i < m; ++i) {
        if (std::isfinite(p.lo[i])) p.lo[i] *= en[i];
        if (std::isfinite(p.hi[i])) p.hi[i] *= en[i];
      }
    }
    s.d = s.d.cwiseProduct(dn);
    s.e = s.e.cwiseProduct(en);

    double pnorm = 0.0;
    for (int j = 0; j < n; ++j) pnorm += p.P.col(j).cwiseAbs().maxCoeff();
    pnorm = std::max(pnorm / std::max(n, 1), inf_norm(p.q));
    const double c = pnorm > 0 ? 1.0 / std::max(pnorm, 1e-12) : 1.0;
    p.P *= c;
    p.q *= c;
    s.c *= c;
  }
  return s;
}

/// Equality-constrained KKT solve on the multiplier-selected active set of
/// the scaled problem; empty when the result is not optimal for the
/// inequality problem.
std::optional<std::pair<VectorXd, VectorXd>> polish_solution(const QpProblem& p,
                                                             const QpSettings& st,
                                                             const VectorXd& y_admm) {
  const int n = p.num_vars();
  const int m = p.num_cons();
  std::vector<int> lower, upper;
  const double y_dead = 1e-10 * std::max(1.0, inf_norm(y_admm));
  for (int i = 0; i < m; ++i) {
    if (y_admm[i] < -y_dead && std::isfinite(p.lo[i])) lower.push_back(i);
    else if (y_admm[i] > y_dead && std::isfinite(p.hi[i])) upper.push_back(i);
  }
  const int k = static_cast<int>(lower.size() + upper.size());
  MatrixXd a_act(k, n);
  VectorXd b_act(k);
  int r = 0;
  for (int i : lower) {
    a_act.row(r) = p.A.row(i);
    b_act[r++] = p.lo[i];
  }
  for (int i : upper) {
    a_act.row(r) = p.A.row(i);
    b_act[r++] = p.hi[i];
  }

  MatrixXd kkt = MatrixXd::Zero(n + k, n + k);
  kkt.topLeftCorner(n, n) = p.P + st.polish_reg * MatrixXd::Identity(n, n);
  if (k) {
    kkt.topRightCorner(n, k) = a_act.transpose();
    kkt.bottomLeftCorner(k, n) = a_act;
    kkt.bottomRightCorner(k, k) = -st.polish_reg * MatrixXd::Identity(k, k);
  }
  Eigen::PartialPivLU<MatrixXd> lu(kkt);
  VectorXd rhs(n + k);
  rhs.head(n) = -p.q;
  rhs.tail(k) = b_act;
  VectorXd sol = lu.solve(rhs);
  for (int it = 0; it < 3; ++it) {  // refine against the unregularized system
    VectorXd resid(n + k);
    resid.head(n) = -p.q - p.P * sol.head(n);
    if (k) {
      resid.head(n) -= a_act.transpose() * sol.tail(k);
      resid.tail(k) = b_act - a_act * sol.head(n);
    }
    sol += lu.solve(resid);
  }
  if (!sol.allFinite()) return std::nullopt;

  VectorXd z = sol.head(n);
  VectorXd y = VectorXd::Zero(m);
  r = 0;
  for (int i : lower) y[i] = sol[n + r++];
  for (int i : upper) y[i] = sol[n + r++];

  const double zmag = std::max(1.0, inf_norm(z));
  for (int i : lower) {
    if (y[i] > 1e-9 * zmag) return std::nullopt;
  }
  for (int i : upper) {
    if (y[i] < -1e-9 * zmag) return std::nullopt;
  }
  const VectorXd az = p.A * z;
  for (int i = 0; i < m; ++i) {
    if (az[i] < p.lo[i] - 1e-7 * zmag || az[i] > p.hi[i] + 1e-7 * zmag) return std::nullopt;
  }
  return std::make_pair(std::move(z), std::move(y));
}

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpSettings& st,
                  const std::optional<QpWarmStart>& warm) {
  const int n = problem.num_vars();
  const int m = problem.num_cons();
  if (problem.q.size() != n || problem.A.cols() != n || problem.lo.size() != m ||
      problem.hi.size() != m) {
    throw std::invalid_argument("solve_qp: inconsistent problem dimensions");
  }
  for (int i = 0; i < m; ++i) {
    if (problem.lo[i] > problem.hi[i]) {
      QpResult res;
      res.status = QpStatus::PrimalInfeasible;
      res.violated_row = i;
      res.z = VectorXd::Zero(n);
      res.y = VectorXd::Zero(m);
      return res;
    }
  }

  QpProblem p = problem;
  Scaling sc;
  if (st.scale) {
    sc = ruiz_scale(p, st.scaling_iters);
  } else {
    sc.d = VectorXd::Ones(n);
    sc.e = VectorXd::Ones(m);
  }

  VectorXd x = VectorXd::Zero(n);
  VectorXd zc = VectorXd::Zero(m);
  VectorXd y = VectorXd::Zero(m);
  if (warm) {
    x = sc.d.cwiseInverse().asDiagonal() * warm->z;
    y = sc.c * (sc.e.cwiseInverse().asDiagonal() * warm->y);
    zc = p.A * x;
  }

  double rho = st.rho;
  auto factorize = [&](double rho_val) {
    MatrixXd mreg = p.P + st.sigma * MatrixXd::Identity(n, n);
    if (m) mreg += rho_val * (p.A.transpose() * p.A);
    return Eigen::LLT<MatrixXd>(mreg);
  };
  Eigen::LLT<MatrixXd> llt = factorize(rho);

  QpResult res;
  res.status = QpStatus::MaxIterations;

  auto unscaled_residuals = [&](const VectorXd& xs, const VectorXd& ys, double& rp, double& rd,
                                double& eps_p, double& eps_d) {
    const VectorXd xu = sc.d.asDiagonal() * xs;
    const VectorXd yu = (1.0 / sc.c) * (sc.e.asDiagonal() * ys);
    const VectorXd ax_u = problem.A * xu;
    rp = 0.0;
    for (int i = 0; i < m; ++i) {
      rp = std::max(rp, std::max(problem.lo[i] - ax_u[i], ax_u[i] - problem.hi[i]));
    }
    rp = std::max(rp, 0.0);
    const VectorXd px = problem.P * xu;
    const VectorXd aty = m ? VectorXd(problem.A.transpose() * yu) : VectorXd::Zero(n);
    rd = inf_norm(px + problem.q + aty);
    eps_p = st.eps_abs + st.eps_rel * inf_norm(ax_u);
    eps_d = st.eps_abs + st.eps_rel * std::max({inf_norm(px), inf_norm(problem.q), inf_norm(aty)});
  };

  auto finish = [&](const VectorXd& xs, const VectorXd& ys, bool polished, int iters,
                    QpStatus status) {
    res.z = sc.d.asDiagonal() * xs;
    res.y = (1.0 / sc.c) * (sc.e.asDiagonal() * ys);
    res.status = status;
    res.iterations = iters;
    res.polished = polished;
    double eps_p, eps_d;
    unscaled_residuals(xs, ys, res.primal_residual, res.dual_residual, eps_p, eps_d);
    res.objective = 0.5 * res.z.dot(problem.P * res.z) + problem.q.dot(res.z);
    return res;
  };

  VectorXd y_prev_cert = y;
  int last_polish_attempt = -1000;
  int iter = 0;
  for (; iter < st.max_iter; ++iter) {
    VectorXd rhs = st.sigma * x - p.q;
    if (m) rhs += p.A.transpose() * (rho * zc - y);
    const VectorXd x_tilde = llt.solve(rhs);
    const VectorXd z_tilde = m ? VectorXd(p.A * x_tilde) : VectorXd();

    x = st.alpha * x_tilde + (1.0 - st.alpha) * x;
    if (m) {
      const VectorXd z_relaxed = st.alpha * z_tilde + (1.0 - st.alpha) * zc;
      const VectorXd zc_old = zc;
      zc = (z_relaxed + y / rho).cwiseMax(p.lo).cwiseMin(p.hi);
      y = y + rho * (z_relaxed - zc);
    }

    const bool check = ((iter + 1) % st.check_every == 0) || iter + 1 == st.max_iter;
    if (!check) continue;

    double rp, rd, eps_p, eps_d;
    unscaled_residuals(x, y, rp, rd, eps_p, eps_d);
    res.primal_residual = rp;
    res.dual_residual = rd;

    if (rp <= eps_p && rd <= eps_d) {
      if (st.polish && m) {
        if (auto pol = polish_solution(p, st, y)) {
          return finish(pol->first, pol->second, true, iter + 1, QpStatus::Solved);
        }
      }
      return finish(x, y, false, iter + 1, QpStatus::Solved);
    }

    // Near-convergence: try to land exactly via the active-set polish.
    const double loose_p = 1e-4 + 1e-4 * (eps_p / std::max(st.eps_abs, 1e-300)) * st.eps_abs;
    const double loose_d = 1e-4 + 1e-4 * (eps_d / std::max(st.eps_abs, 1e-300)) * st.eps_abs;
    if (st.polish && m && rp <= loose_p && rd <= loose_d &&
        iter - last_polish_attempt >= 100) {
      last_polish_attempt = iter;
      if (auto pol = polish_solution(p, st, y)) {
        double rp2, rd2, ep2, ed2;
        unscaled_residuals(pol->first, pol->second, rp2, rd2, ep2, ed2);
        if (rp2 <= ep2 && rd2 <= ed2) {
          return finish(pol->first, pol->second, true, iter + 1, QpStatus::Solved);
        }
      }
    }

    // Primal infeasibility certificate from the dual direction.
    if (m) {
      const VectorXd dy = y - y_prev_cert;
      const double dy_norm = inf_norm(dy);
      if (dy_norm > st.eps_infeasible) {
        const VectorXd dyn = dy / dy_norm;
        double support = 0.0;
        bool bounded = true;
        for (int i = 0; i < m; ++i) {
          if (dyn[i] > 0) {
            if (!std::isfinite(p.hi[i])) { bounded = false; break; }
            support += p.hi[i] * dyn[i];
          } else if (dyn[i] < 0) {
            if (!std::isfinite(p.lo[i])) { bounded = false; break; }
            support += p.lo[i] * dyn[i];
          }
        }
        if (bounded && inf_norm(p.A.transpose() * dyn) <= 1e-8 && support <= -1e-8) {
          QpResult bad = finish(x, y, false, iter + 1, QpStatus::PrimalInfeasible);
          VectorXd viol = dyn.cwiseAbs();
          viol.maxCoeff(&bad.violated_row);
          return bad;
        }
      }
      y_prev_cert = y;
    }

    if (st.adaptive_rho && m && (iter + 1) % st.rho_update_every == 0) {
      // Scaled residuals steer rho (OSQP rule).
      const VectorXd ax = p.A * x;
      double srp = 0.0;
      for (int i = 0; i < m; ++i) {
        srp = std::max(srp, std::max(p.lo[i] - ax[i], ax[i] - p.hi[i]));
      }
      srp = std::max(srp, 0.0);
      const double srd = inf_norm(p.P * x + p.q + p.A.transpose() * y);
      const double denom_p = std::max(inf_norm(ax), 1e-12);
      const double denom_d =
          std::max({inf_norm(p.P * x), inf_norm(p.q), inf_norm(p.A.transpose() * y), 1e-12});
      const double ratio = std::sqrt((srp / denom_p) / std::max(srd / denom_d, 1e-16));
      const double rho_new = std::clamp(rho * ratio, 1e-4, 1e4);
      if (rho_new > 5.0 * rho || rho_new < rho / 5.0) {
        rho = rho_new;
        llt = factorize(rho);
      }
    }
  }

  // Last chance: polish from wherever we stopped.
  if (st.polish && m) {
    if (auto pol = polish_solution(p, st, y)) {
      double rp2, rd2, ep2, ed2;
      unscaled_residuals(pol->first, pol->second, rp2, rd2, ep2, ed2);
      if (rp2 <= ep2 && rd2 <= ed2) {
        return finish(pol->first, pol->second, true, iter, QpStatus::Solved);
      }
    }
  }
  // Plateau acceptance at the relaxed residual level.
  {
    double rp, rd, eps_p, eps_d;
    unscaled_residuals(x, y, rp, rd, eps_p, eps_d);
    const double scale_p = (eps_p - st.eps_abs) / std::max(st.eps_rel, 1e-300);
    const double scale_d = (eps_d - st.eps_abs) / std::max(st.eps_rel, 1e-300);
    if (rp <= st.eps_accept_abs + st.eps_accept_rel * scale_p &&
        rd <= st.eps_accept_abs + st.eps_accept_rel * scale_d) {
      return finish(x, y, false, iter, QpStatus::Solved);
    }
  }
  if (const char* dump = std::getenv("INSPECTSIM_QP_DUMP")) {
    if (FILE* f = std::fopen(dump, "w")) {
      std::fprintf(f, "%d %d\n", n, m);
      auto wv = [&](const VectorXd& v) {
        for (int i = 0; i < v.size(); ++i) std::fprintf(f, "%.17g ", v[i]);
        std::fprintf(f, "\n");
      };
      for (int i = 0; i < n; ++i) wv(problem.P.row(i));
      wv(problem.q);
      for (int i = 0; i < m; ++i) wv(problem.A.row(i));
      wv(problem.lo);
      wv(problem.hi);
      std::fclose(f);
    }
  }
  return finish(x, y, false, iter, QpStatus::MaxIterations);
}

}  // namespace inspectsim
