#include "inspectsim/observer.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace inspectsim {

namespace {

Vec3 cross_matrix_apply(const Vec3& w, const Vec3& x) { return w.cross(x); }

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

Eigen::Matrix<double, 3, 2> omega_matrix(const Vec2& s, const Vec3& v) {
  const Vec3 s_bar(s.x(), s.y(), 1.0);
  Eigen::RowVector2d a(s.x() * v.z() - v.x(), s.y() * v.z() - v.y());
  return s_bar * a;
}

Vec2 flow_prior(const Vec2& s, const Vec3& omega) {
  const double x = s.x();
  const double y = s.y();
  Eigen::Matrix<double, 2, 3> l_omega;
  l_omega << x * y, -1.0 - x * x, y,  //
      1.0 + y * y, -x * y, -x;
  return l_omega * omega;
}

Vec3 propagate_chi(const Vec3& chi, const CameraTwist& twist, double dt) {
  const Vec3 rate = chi * chi.dot(twist.v) - cross_matrix_apply(twist.omega, chi);
  return chi + dt * rate;
}

ObserverState ingest_frame(const ObserverState& st, std::span<const Feature> detections) {
  ObserverState out;
  out.chi_hat = st.chi_hat;
  out.gains = st.gains;
  for (const Feature& f : detections) {
    if (out.tracks.count(f.id)) {
      throw std::invalid_argument("ingest_frame: duplicate feature id " + std::to_string(f.id));
    }
    TrackedFeature tf;
    tf.s = f.s;
    auto prev = st.tracks.find(f.id);
    if (prev != st.tracks.end()) {
      tf.s_hat = prev->second.s_hat;
      tf.age = prev->second.age + 1;
    } else {
      tf.s_hat = f.s;
      tf.age = 0;
    }
    out.tracks.emplace(f.id, tf);
  }
  return out;
}

ObserverState observer_step(const ObserverState& st, const CameraTwist& twist, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("observer_step: dt must be > 0");
  if (!finite(st.chi_hat) || !finite(twist.v) || !finite(twist.omega)) {
    throw std::invalid_argument("observer_step: non-finite state or twist");
  }

  ObserverState out = st;
  Vec3 correction = Vec3::Zero();
  for (auto& [id, tf] : out.tracks) {
    (void)id;
    const Vec2 xi = tf.s - tf.s_hat;
    if (!xi.allFinite()) throw std::invalid_argument("observer_step: non-finite feature error");
    // Regressor and rotation prior at the tracked estimate: evaluating
    // them at the measured position correlates the regressor with the
    // measurement noise and biases the adaptation (errors-in-variables).
    const auto omega_i = omega_matrix(tf.s_hat, twist.v);
    const Vec2 s_hat_rate = flow_prior(tf.s_hat, twist.omega) + omega_i.transpose() * st.chi_hat +
                            st.gains.h * xi;
    tf.s_hat += dt * s_hat_rate;
    correction += omega_i * xi;
  }
  const Vec3 chi_rate = st.chi_hat * st.chi_hat.dot(twist.v) -
                        cross_matrix_apply(twist.omega, st.chi_hat) +
                        st.gains.lambda * correction;
  out.chi_hat = st.chi_hat + dt * chi_rate;
  if (!finite(out.chi_hat)) throw std::runtime_error("observer_step: parameter estimate diverged");
  return out;
}

ObserverState observer_advance(const ObserverState& st, const CameraTwist& twist, double dt,
                               int substeps) {
  if (substeps < 1) throw std::invalid_argument("observer_advance: substeps must be >= 1");
  ObserverState out = st;
  const double h = dt / substeps;
  for (int i = 0; i < substeps; ++i) out = observer_step(out, twist, h);
  return out;
}

int stable_observer_substeps(const ObserverState& st, const CameraTwist& twist, double dt) {
  double trace = 0.0;
  for (const auto& [id, tf] : st.tracks) {
    (void)id;
    const double alpha_sq = Vec2(tf.s_hat.x() * twist.v.z() - twist.v.x(),
                                 tf.s_hat.y() * twist.v.z() - twist.v.y())
                                .squaredNorm();
    trace += alpha_sq * (1.0 + tf.s_hat.squaredNorm());
  }
  const double k = 1.5 * dt * st.gains.lambda * trace / std::max(st.gains.h, 1e-9);
  return std::clamp(static_cast<int>(std::ceil(k)), 1, 64);
}

namespace {

/// exp(A t) for 2x2 A via the trace-split closed form.
Eigen::Matrix2d expm_2x2(const Eigen::Matrix2d& a, double t) {
  const double mu = 0.5 * (a(0, 0) + a(1, 1));
  const Eigen::Matrix2d b = a - mu * Eigen::Matrix2d::Identity();
  const double s2 = b(0, 0) * b(0, 0) + b(0, 1) * b(1, 0);  // b^2 = s2 I
  double c, k;
  if (s2 >= 0.0) {
    const double q = std::sqrt(s2);
    c = std::cosh(q * t);
    k = q * t > 1e-8 ? std::sinh(q * t) / q : t;
  } else {
    const double w = std::sqrt(-s2);
    c = std::cos(w * t);
    k = w * t > 1e-8 ? std::sin(w * t) / w : t;
  }
  return std::exp(mu * t) * (c * Eigen::Matrix2d::Identity() + k * b);
}

}  // namespace

ObserverState observer_step_exact(const ObserverState& st, const CameraTwist& twist, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("observer_step_exact: dt must be > 0");
  ObserverState out = st;
  const Vec3 drift = st.chi_hat * st.chi_hat.dot(twist.v) - twist.omega.cross(st.chi_hat);
  if (out.tracks.empty()) {
    out.chi_hat = st.chi_hat + dt * drift;
    return out;
  }

  const std::size_t m = out.tracks.size();
  std::vector<Eigen::Matrix<double, 3, 2>> omegas;
  std::vector<Vec2> xi0;
  omegas.reserve(m);
  xi0.reserve(m);
  Mat3 gram = Mat3::Zero();
  for (const auto& [id, tf] : out.tracks) {
    (void)id;
    omegas.push_back(omega_matrix(tf.s_hat, twist.v));
    xi0.push_back(tf.s - tf.s_hat);
    gram += omegas.back() * omegas.back().transpose();
  }

  Eigen::SelfAdjointEigenSolver<Mat3> es(gram);
  const Vec3 evals = es.eigenvalues();
  const Mat3 w = es.eigenvectors();

  const double h_gain = st.gains.h;
  // Sampled-data guard: with measurements arriving once per frame, the
  // inter-frame feedback loop goes unstable once the error-system natural
  // frequency sqrt(lambda * lambda_max) crosses the Nyquist band, no
  // matter how the frame interior is integrated. Scale the adaptation
  // gain so omega * dt stays at 2.5 rad at most.
  double lambda = st.gains.lambda;
  const double omega_cap = 2.5 / dt;
  if (lambda * evals.maxCoeff() > omega_cap * omega_cap) {
    lambda = omega_cap * omega_cap / evals.maxCoeff();
  }
  const double decay = std::exp(-h_gain * dt);

  // Modal coordinates: xi_j = q_j . xi with q_j = Omega' w_j / sigma_j.
  Vec3 delta_dt = Vec3::Zero();
  double xi_mode0[3] = {0, 0, 0};
  double xi_mode_dt[3] = {0, 0, 0};
  bool coupled[3] = {false, false, false};
  for (int j = 0; j < 3; ++j) {
    const double beta = w.col(j).dot(drift);
    // Modes with negligible excitation integrate as pure drift; keeping
    // them in the modal solve hits a 1/(lambda sigma^2) cancellation.
    if (!(evals[j] > 0.0) || lambda * evals[j] * dt * dt <= 1e-8) {
      delta_dt += w.col(j) * (beta * dt);
      continue;
    }
    coupled[j] = true;
    const double sigma = std::sqrt(evals[j]);
    double xi_j = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      xi_j += (omegas[i].transpose() * w.col(j)).dot(xi0[i]);
    }
    xi_j /= sigma;
    xi_mode0[j] = xi_j;

    Eigen::Matrix2d a;
    a << -h_gain, -sigma, lambda * sigma, 0.0;
    const Eigen::Matrix2d m_exp = expm_2x2(a, dt);
    // particular response to the constant input [0; beta]
    const Eigen::Matrix2d a_inv =
        (Eigen::Matrix2d() << 0.0, 1.0 / (lambda * sigma), -1.0 / sigma,
         -h_gain / (lambda * sigma * sigma))
            .finished();
    const Eigen::Vector2d state0(xi_j, 0.0);
    const Eigen::Vector2d forced = a_inv * ((m_exp - Eigen::Matrix2d::Identity()) *
                                            Eigen::Vector2d(0.0, beta));
    const Eigen::Vector2d state_dt = m_exp * state0 + forced;
    xi_mode_dt[j] = state_dt[0];
    delta_dt += w.col(j) * state_dt[1];
  }

  out.chi_hat = st.chi_hat + delta_dt;
  if (!out.chi_hat.allFinite()) {
    throw std::runtime_error("observer_step_exact: parameter estimate diverged");
  }

  std::size_t i = 0;
  for (auto& [id, tf] : out.tracks) {
    (void)id;
    // xi(dt): orthogonal remainder decays at the tracking gain; modal
    // parts follow the 2x2 solutions.
    Vec2 xi_modal0 = Vec2::Zero();
    Vec2 xi_modal_dt = Vec2::Zero();
    for (int j = 0; j < 3; ++j) {
      if (!coupled[j]) continue;
      const double sigma = std::sqrt(evals[j]);
      const Vec2 q_ji = (omegas[i].transpose() * w.col(j)) / sigma;
      xi_modal0 += q_ji * xi_mode0[j];
      xi_modal_dt += q_ji * xi_mode_dt[j];
    }
    const Vec2 xi_dt = decay * (xi0[i] - xi_modal0) + xi_modal_dt;
    const Vec2 predicted_flow = flow_prior(tf.s_hat, twist.omega) +
                                omegas[i].transpose() * st.chi_hat;
    tf.s_hat = tf.s + predicted_flow * dt - xi_dt;
    ++i;
  }
  return out;
}

Plane plane_estimate(const Vec3& chi_hat, double chi_min) {
  const double norm = chi_hat.norm();
  if (!(norm >= chi_min)) {
    throw GeometryError("plane_estimate: |chi| below floor (plane at infinity)");
  }
  return canonicalize({-chi_hat / norm, 1.0 / norm});
}

Mat3 pe_gram(std::span<const Feature> features, const Vec3& v) {
  Mat3 g = Mat3::Zero();
  for (const Feature& f : features) {
    const auto omega_i = omega_matrix(f.s, v);
    g += omega_i * omega_i.transpose();
  }
  return g;
}

PEReport pe_report_from_gram(const Mat3& gram, double beta_threshold) {
  if (!(beta_threshold > 0.0)) throw std::invalid_argument("pe_report: beta_threshold must be > 0");
  PEReport rep;
  rep.gram = 0.5 * (gram + gram.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> es(rep.gram);
  const Vec3 evals = es.eigenvalues();
  const double lambda_max = std::max(evals.maxCoeff(), 0.0);
  const double rank_tol = 1e-8 * lambda_max;
  rep.rank = 0;
  for (int i = 0; i < 3; ++i) {
    if (evals[i] > rank_tol && evals[i] > 0.0) ++rep.rank;
  }
  rep.lambda_min = std::max(evals.minCoeff(), 0.0);
  rep.satisfied = rep.lambda_min >= beta_threshold;
  return rep;
}

PEReport pe_report(std::span<const Feature> features, const Vec3& v, double beta_threshold) {
  return pe_report_from_gram(pe_gram(features, v), beta_threshold);
}

PeWindow::PeWindow(double window_seconds, double dt) : dt_(dt) {
  if (!(window_seconds > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("PeWindow: window and dt must be > 0");
  }
  capacity_ = static_cast<std::size_t>(std::ceil(window_seconds / dt));
  if (capacity_ == 0) capacity_ = 1;
}

void PeWindow::push(const Mat3& frame_gram) {
  frames_.push_back(frame_gram * dt_);
  sum_ += frames_.back();
  if (frames_.size() > capacity_) {
    sum_ -= frames_.front();
    frames_.pop_front();
  }
}

}  // namespace inspectsim
