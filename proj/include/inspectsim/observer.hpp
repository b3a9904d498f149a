#pragma once

#include "inspectsim/geometry.hpp"

#include <deque>
#include <map>
#include <span>

namespace inspectsim {

/// Camera twist expressed in the camera frame.
struct CameraTwist {
  Vec3 v = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
};

/// Regressor of the inverse-depth parameter: a 3x2 matrix
/// [x; y; 1] * [x v_z - v_x, y v_z - v_y], linear in v.
Eigen::Matrix<double, 3, 2> omega_matrix(const Vec2& s, const Vec3& v);

/// Rotation-induced image velocity of a feature; zero for omega = 0.
Vec2 flow_prior(const Vec2& s, const Vec3& omega);

/// Euler step of chi_dot = chi chi^T v - omega x chi.
Vec3 propagate_chi(const Vec3& chi, const CameraTwist& twist, double dt);

struct TrackedFeature {
  Vec2 s = Vec2::Zero();      ///< latest measurement
  Vec2 s_hat = Vec2::Zero();  ///< observer's tracked estimate
  int age = 0;                ///< frames survived
};

struct ObserverGains {
  double h = 12.0;       ///< feature-tracking gain (H = h*I)
  double lambda = 0.95;  ///< parameter-adaptation gain (lambda*I)
};

/// Adaptive inverse-depth plane observer state. A value type: step
/// functions return updated copies, nothing is shared.
struct ObserverState {
  Vec3 chi_hat = Vec3::Zero();
  std::map<int, TrackedFeature> tracks;
  ObserverGains gains;
};

/// Frame matching: detections become the new track set. Matched ids keep
/// their s_hat, new ids start with s_hat = s, absent ids are dropped.
/// chi_hat is untouched. Throws on duplicate detection ids.
ObserverState ingest_frame(const ObserverState& st, std::span<const Feature> detections);

/// One forward-Euler step of the observer:
///   s_hat_i += dt * (flow_prior + Omega_i^T chi_hat + h * xi_i)
///   chi_hat += dt * (chi_hat chi_hat^T v - omega x chi_hat + lambda * sum_i Omega_i xi_i)
/// with xi_i = s_i - s_hat_i. With no tracks the parameter propagates
/// open loop. Throws on non-finite input or dt <= 0.
ObserverState observer_step(const ObserverState& st, const CameraTwist& twist, double dt);

/// Integrates one camera frame in `substeps` Euler slices (same
/// measurements throughout). The plain single step is Euler-unstable once
/// dt * lambda * lambda_max(Gram) exceeds the tracking gain h, which the
/// multi-plane scenarios reach near corners; see stable_observer_substeps.
ObserverState observer_advance(const ObserverState& st, const CameraTwist& twist, double dt,
                               int substeps);

/// Substep count that keeps the per-frame integration inside the Euler
/// stability region (bound h <= gain_h / (lambda * lambda_max), estimated
/// through the Gram trace, with a 1.5x margin). Clamped to [1, 64].
int stable_observer_substeps(const ObserverState& st, const CameraTwist& twist, double dt);

/// Exact exponential step of the frame-frozen observer dynamics: the
/// regressor, rotation prior and propagation drift are held over the
/// frame, the measurement is extrapolated with the predicted flow, and
/// the remaining linear error system is integrated in closed form per
/// excitation eigenmode. Unconditionally stable in the gains and feature
/// count, unlike the plain Euler step.
ObserverState observer_step_exact(const ObserverState& st, const CameraTwist& twist, double dt);

/// Recovers the camera-frame plane from chi: d = 1/|chi|, n = -chi/|chi|,
/// so that chi_of_plane(plane_estimate(chi)) == chi. Throws a
/// plane-at-infinity error for |chi| < chi_min.
Plane plane_estimate(const Vec3& chi_hat, double chi_min = 1e-4);

/// Single-frame excitation Gram matrix sum_i Omega_i Omega_i^T. Symmetric
/// PSD; zero for an empty set or a stationary camera.
Mat3 pe_gram(std::span<const Feature> features, const Vec3& v);

struct PEReport {
  Mat3 gram = Mat3::Zero();
  int rank = 0;
  double lambda_min = 0.0;
  bool satisfied = false;
};

/// Eigenvalue analysis of a Gram matrix. Rank uses a relative tolerance
/// of 1e-8 * lambda_max; satisfied iff lambda_min >= beta_threshold.
PEReport pe_report_from_gram(const Mat3& gram, double beta_threshold);

PEReport pe_report(std::span<const Feature> features, const Vec3& v, double beta_threshold);

/// Sliding approximation of the excitation integral of the PE condition:
/// sum of per-frame Gram matrices times dt over the last ceil(T/dt) frames.
class PeWindow {
public:
  PeWindow(double window_seconds, double dt);

  void push(const Mat3& frame_gram);
  const Mat3& integral() const { return sum_; }
  PEReport report(double beta_threshold) const { return pe_report_from_gram(sum_, beta_threshold); }

private:
  std::size_t capacity_;
  double dt_;
  std::deque<Mat3> frames_;
  Mat3 sum_ = Mat3::Zero();
};

}  // namespace inspectsim
