#include "inspectsim/ekf.hpp"

namespace inspectsim {

EkfState ekf_init(const Vec3& chi0, const EkfConfig& cfg) {
  EkfState st;
  st.chi = chi0;
  st.cov = cfg.sigma0 * cfg.sigma0 * Mat3::Identity();
  return st;
}

namespace {

Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0, -w.z(), w.y(),  //
      w.z(), 0, -w.x(),   //
      -w.y(), w.x(), 0;
  return s;
}

}  // namespace

EkfState ekf_step(const EkfState& st, std::span<const Feature> detections,
                  const CameraTwist& twist, double dt, const Vec2& meas_var,
                  const EkfConfig& cfg) {
  if (!(dt > 0.0)) throw std::invalid_argument("ekf_step: dt must be > 0");
  EkfState out = st;

  // Predict. Jacobian of chi chi^T v - [omega]x chi.
  const Mat3 f_jac = st.chi.dot(twist.v) * Mat3::Identity() + st.chi * twist.v.transpose() -
                     skew(twist.omega);
  const Mat3 f_d = Mat3::Identity() + dt * f_jac;
  out.chi = propagate_chi(st.chi, twist, dt);
  out.cov = f_d * st.cov * f_d.transpose() + cfg.process_noise * dt * Mat3::Identity();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();

  // Sequential per-feature flow updates (measurement noise is block
  // diagonal, so this is equivalent to the stacked update).
  const Eigen::Matrix2d r_meas = (2.0 / (dt * dt)) * meas_var.asDiagonal();
  for (const Feature& f : detections) {
    auto prev = st.prev.find(f.id);
    if (prev == st.prev.end()) continue;
    const Vec2 flow = (f.s - prev->second) / dt;
    // Midpoint regressor: its correlation with the finite-difference flow
    // noise cancels exactly, unlike either endpoint.
    const Vec2 mid = 0.5 * (f.s + prev->second);
    const auto omega_i = omega_matrix(mid, twist.v);
    const Eigen::Matrix<double, 2, 3> h_jac = omega_i.transpose();
    const Vec2 innovation = flow - (flow_prior(mid, twist.omega) + h_jac * out.chi);
    const Eigen::Matrix2d s_innov = h_jac * out.cov * h_jac.transpose() + r_meas;
    const double det = s_innov.determinant();
    const double scale = s_innov.diagonal().cwiseAbs().maxCoeff();
    if (!(std::abs(det) > 1e-18 * std::max(scale * scale, 1e-30))) {
      ++out.skipped_updates;
      continue;
    }
    const Eigen::Matrix<double, 3, 2> gain = out.cov * h_jac.transpose() * s_innov.inverse();
    out.chi += gain * innovation;
    const Mat3 ikh = Mat3::Identity() - gain * h_jac;
    out.cov = ikh * out.cov * ikh.transpose() + gain * r_meas * gain.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  }

  out.prev.clear();
  for (const Feature& f : detections) out.prev[f.id] = f.s;
  return out;
}

}  // namespace inspectsim
