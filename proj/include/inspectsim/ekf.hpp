#pragma once

#include "inspectsim/observer.hpp"

namespace inspectsim {

/// Baseline EKF over chi with finite-difference optical-flow measurements.
/// Process model is propagate_chi plus additive noise; each matched
/// feature contributes flow (s_k - s_{k-1})/dt with covariance
/// (2/dt^2) * Sigma_s.
struct EkfConfig {
  double sigma0 = 0.05;        ///< prior std per chi axis
  double process_noise = 1e-8; ///< continuous-time noise PSD per axis
};

struct EkfState {
  Vec3 chi = Vec3::Zero();
  Mat3 cov = Mat3::Identity();
  std::map<int, Vec2> prev;  ///< previous-frame feature positions
  int skipped_updates = 0;   ///< singular-innovation events
};

EkfState ekf_init(const Vec3& chi0, const EkfConfig& cfg);

/// One predict/update cycle. meas_var is the diagonal of Sigma_s.
EkfState ekf_step(const EkfState& st, std::span<const Feature> detections,
                  const CameraTwist& twist, double dt, const Vec2& meas_var,
                  const EkfConfig& cfg);

}  // namespace inspectsim
