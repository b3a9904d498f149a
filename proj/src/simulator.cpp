#include "inspectsim/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace inspectsim {

Mat3 camera_rotation_from_yaw(double yaw) {
  Mat3 r;
  r.col(0) = Vec3(std::sin(yaw), -std::cos(yaw), 0.0);
  r.col(1) = Vec3(0.0, 0.0, -1.0);
  r.col(2) = Vec3(std::cos(yaw), std::sin(yaw), 0.0);
  return r;
}

RigidTransform camera_pose(const PlatformState& x, const Vec3& mounting_offset, double yaw) {
  const Mat3 r = camera_rotation_from_yaw(yaw);
  Mat3 yaw_only;
  yaw_only = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  return RigidTransform{r, x.p + yaw_only * mounting_offset};
}

namespace {

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a < -M_PI) a += 2.0 * M_PI;
  return a;
}

}  // namespace

double yaw_update(double yaw, YawPolicy policy, const std::optional<Vec3>& n_hat_global, double dt,
                  double rate_limit) {
  if (policy == YawPolicy::Fixed || !n_hat_global) return yaw;
  const Vec2 toward(-n_hat_global->x(), -n_hat_global->y());
  if (toward.norm() < 1e-6) return yaw;  // degenerate projection: hold
  const double target = std::atan2(toward.y(), toward.x());
  const double delta = wrap_angle(target - yaw);
  const double max_step = rate_limit * dt;
  return yaw + std::clamp(delta, -max_step, max_step);
}

World::World(const Scenario& sc, std::uint64_t noise_seed)
    : sc_(sc),
      rng_geometry_(mix_seed(sc.seed, 0x776f726c64ull)),
      rng_noise_(mix_seed(noise_seed, 0x6e6f697365ull)) {
  for (std::size_t i = 0; i < sc.planes.size(); ++i) {
    const PlaneSpec& ps = sc.planes[i];
    if (ps.replenish) continue;  // spawned on demand against the frustum
    const auto pts = sample_plane_points(ps.plane, ps.extent, std::max(ps.feature_count, 1),
                                         mix_seed(sc.seed, i));
    for (const Vec3& p : pts) {
      points_.push_back(Point{next_id_, static_cast<int>(i), p});
      plane_of_id_.push_back(static_cast<int>(i));
      ++next_id_;
    }
  }
}

bool World::visible(const RigidTransform& pose, const Vec3& p) const {
  return project(pose.inverse().apply(p), sc_.camera.model).has_value();
}

std::optional<std::pair<PlaneExtent, double>> World::spawn_box(const RigidTransform& pose,
                                                               const PlaneSpec& ps) const {
  (void)pose;
  (void)ps;
  return std::nullopt;  // superseded by the ray-share classifier below
}

/// First-hit classification of a grid of view rays against all wall
/// extents: each ray belongs to the nearest plane whose wall it strikes.
/// Gives per-plane view shares and spawn rectangles.
struct ViewShares {
  std::vector<double> share;
  std::vector<PlaneExtent> box;
  std::vector<bool> has_box;
};

static ViewShares classify_view(const Scenario& sc, const RigidTransform& pose) {
  const std::size_t np = sc.planes.size();
  ViewShares out;
  out.share.assign(np, 0.0);
  out.box.assign(np, PlaneExtent{});
  out.has_box.assign(np, false);
  std::vector<bool> any(np, false);

  const double th = sc.camera.model.tan_half_h();
  const double tv = sc.camera.model.tan_half_v();
  constexpr int kNu = 7;
  constexpr int kNv = 5;
  int rays = 0;
  std::vector<std::vector<Vec2>> hits(np);
  for (int iu = 0; iu < kNu; ++iu) {
    for (int iv = 0; iv < kNv; ++iv) {
      const double x = th * (2.0 * iu / (kNu - 1) - 1.0);
      const double y = tv * (2.0 * iv / (kNv - 1) - 1.0);
      const Vec3 dir = (pose.R * Vec3(x, y, 1.0)).normalized();
      ++rays;
      int best = -1;
      double best_t = 1e6;
      Vec2 best_uv;
      for (std::size_t i = 0; i < np; ++i) {
        const PlaneSpec& ps = sc.planes[i];
        const double denom = ps.plane.n.dot(dir);
        if (std::abs(denom) < 1e-9) continue;
        const double tstar = -plane_offset(ps.plane, pose.t) / denom;
        if (tstar <= sc.camera.model.z_min || tstar >= best_t) continue;
        const Vec2 uv = plane_uv(ps.plane, pose.t + tstar * dir);
        if (uv.x() < ps.extent.u_min || uv.x() > ps.extent.u_max || uv.y() < ps.extent.v_min ||
            uv.y() > ps.extent.v_max) {
          continue;
        }
        best = static_cast<int>(i);
        best_t = tstar;
        best_uv = uv;
      }
      if (best >= 0) {
        out.share[best] += 1.0;
        hits[best].push_back(best_uv);
        any[best] = true;
      }
    }
  }
  for (std::size_t i = 0; i < np; ++i) {
    out.share[i] /= rays;
    if (!any[i] || hits[i].size() < 2) continue;
    PlaneExtent box{hits[i][0].x(), hits[i][0].x(), hits[i][0].y(), hits[i][0].y()};
    for (const Vec2& h : hits[i]) {
      box.u_min = std::min(box.u_min, h.x());
      box.u_max = std::max(box.u_max, h.x());
      box.v_min = std::min(box.v_min, h.y());
      box.v_max = std::max(box.v_max, h.y());
    }
    const double pad_u = 0.1 * (box.u_max - box.u_min) + 1e-6;
    const double pad_v = 0.1 * (box.v_max - box.v_min) + 1e-6;
    box.u_min = std::max(box.u_min - pad_u, sc.planes[i].extent.u_min);
    box.u_max = std::min(box.u_max + pad_u, sc.planes[i].extent.u_max);
    box.v_min = std::max(box.v_min - pad_v, sc.planes[i].extent.v_min);
    box.v_max = std::min(box.v_max + pad_v, sc.planes[i].extent.v_max);
    if (box.degenerate()) continue;
    out.box[i] = box;
    out.has_box[i] = true;
  }
  return out;
}

int World::visible_count_of_plane(const RigidTransform& pose, int plane_idx) const {
  int count = 0;
  for (const Point& pt : points_) {
    if (pt.active && pt.plane_idx == plane_idx && visible(pose, pt.p)) ++count;
  }
  return count;
}

void World::replenish(const RigidTransform& pose) {
  bool needed = false;
  for (const PlaneSpec& ps : sc_.planes) needed = needed || (ps.replenish && ps.feature_count > 0);
  if (!needed) return;
  const ViewShares shares = classify_view(sc_, pose);
  for (std::size_t i = 0; i < sc_.planes.size(); ++i) {
    const PlaneSpec& ps = sc_.planes[i];
    if (!ps.replenish || ps.feature_count <= 0 || !shares.has_box[i]) continue;
    const int target = static_cast<int>(std::lround(ps.feature_count * shares.share[i]));
    const int missing = target - visible_count_of_plane(pose, static_cast<int>(i));
    if (missing <= 0) continue;
    const PlaneExtent& box = shares.box[i];
    for (int k = 0; k < missing; ++k) {
      bool placed = false;
      for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
        const double u = rng_geometry_.uniform(box.u_min, box.u_max);
        const double v = rng_geometry_.uniform(box.v_min, box.v_max);
        const Vec3 p = plane_point(ps.plane, u, v);
        if (visible(pose, p)) {
          points_.push_back(Point{next_id_, static_cast<int>(i), p});
          plane_of_id_.push_back(static_cast<int>(i));
          ++next_id_;
          placed = true;
        }
      }
      if (!placed) break;
    }
  }
}

std::vector<Feature> World::render(const RigidTransform& pose, const Vec2& sigma_s_cov) {
  std::vector<Feature> out;
  const RigidTransform inv = pose.inverse();
  const double sx = std::sqrt(std::max(sigma_s_cov.x(), 0.0));
  const double sy = std::sqrt(std::max(sigma_s_cov.y(), 0.0));
  for (Point& pt : points_) {
    if (!pt.active) continue;
    const auto s = project(inv.apply(pt.p), sc_.camera.model);
    if (!s) {
      // retire replenished points that left the view for good
      if (sc_.planes[pt.plane_idx].replenish && ++pt.invisible_ticks > 50) pt.active = false;
      continue;
    }
    pt.invisible_ticks = 0;
    Vec2 meas = *s;
    if (sx > 0.0) meas.x() += sx * rng_noise_.normal();
    if (sy > 0.0) meas.y() += sy * rng_noise_.normal();
    out.push_back(Feature{pt.id, meas});
  }
  return out;
}

int World::plane_of_feature(int id) const {
  if (id < 0 || id >= static_cast<int>(plane_of_id_.size())) return -1;
  return plane_of_id_[id];
}

namespace {

struct EstimateView {
  Vec3 chi_cam;
  Plane plane_cam;
  Plane plane_global;  ///< oriented so the camera is on the nonnegative side
};

EstimateView make_view(const Vec3& chi, const RigidTransform& pose, double chi_min, int tick) {
  EstimateView view;
  view.chi_cam = chi;
  try {
    view.plane_cam = plane_estimate(chi, chi_min);
  } catch (const GeometryError& e) {
    throw SimError(std::string("estimate degenerate: ") + e.what(), tick);
  }
  view.plane_global = oriented_toward(transform_plane(pose, view.plane_cam), pose.t);
  return view;
}

}  // namespace

Trace run_with_seed(const Scenario& sc, std::uint64_t seed, Trace* partial_out) {
  Trace trace;
  struct PartialGuard {
    Trace& trace;
    Trace* out;
    bool disarm = false;
    ~PartialGuard() {
      if (!disarm && out) *out = trace;
    }
  } guard{trace, partial_out};
  const int n_ticks = sc.tick_count();
  if (n_ticks <= 0) return trace;
  const double dt = sc.dt();

  World world(sc, seed);
  PlatformState x = sc.x0;
  double yaw = sc.camera.yaw0;
  double yaw_rate = 0.0;

  ObserverState obs;
  obs.chi_hat = sc.chi0;
  obs.gains = sc.gains;
  EkfState ekf = ekf_init(sc.chi0, sc.ekf);

  SampledEstimate sampled{sc.chi0, 1.0};
  InspectionSpec spec = sc.inspection;
  XBar terminal_xbar = lift(x);
  std::optional<QpWarmStart> warm;
  PeWindow pe_window(sc.pe_window, dt);
  Vec3 u = Vec3::Zero();
  const int sample_every =
      std::max(1, static_cast<int>(std::llround(sc.sample_interval_s * sc.camera.rate_hz)));
  // Twist realized over the previous inter-frame interval, camera frame.
  CameraTwist prev_twist;
  {
    const RigidTransform pose0 = camera_pose(x, sc.camera.mounting_offset, yaw);
    prev_twist.v = pose0.R.transpose() * x.v;
  }

  for (int k = 0; k < n_ticks; ++k) {
    const double t = k * dt;
    const RigidTransform pose = camera_pose(x, sc.camera.mounting_offset, yaw);

    world.replenish(pose);
    std::vector<Feature> detections;
    try {
      detections = world.render(pose, sc.sigma_s);
    } catch (const std::exception& e) {
      throw SimError(e.what(), k);
    }

    // Estimator input. The adaptive observer integrates at the end of the
    // tick once the realized interval twist is known; the EKF differences
    // the frames [k-1, k] and therefore consumes the previous interval.
    Vec3 chi_now;
    try {
      if (sc.estimator == EstimatorKind::Adaptive) {
        obs = ingest_frame(obs, detections);
        chi_now = obs.chi_hat;
      } else {
        const int skipped_before = ekf.skipped_updates;
        ekf = ekf_step(ekf, detections, prev_twist, dt, sc.sigma_s, sc.ekf);
        if (ekf.skipped_updates > skipped_before) {
          trace.events.push_back({k, "ekf: skipped singular innovation update"});
        }
        chi_now = ekf.chi;
      }
    } catch (const std::exception& e) {
      throw SimError(e.what(), k);
    }

    pe_window.push(pe_gram(detections, prev_twist.v));
    const PEReport pe = pe_window.report(sc.pe_beta);

    const EstimateView est = make_view(chi_now, pose, sc.chi_min, k);

    TraceRow row;
    row.t = t;
    row.p = x.p;
    row.v = x.v;
    row.yaw = yaw;
    row.chi_hat = chi_now;
    row.n_hat = est.plane_global.n;
    row.d_hat = est.plane_global.d;
    row.pe_lambda_min = pe.lambda_min;
    row.pe_rank = pe.rank;
    row.pe_ok = pe.satisfied;
    row.visible_count = static_cast<int>(detections.size());

    // Active true plane: the nearest wall.
    int active = 0;
    double best = kInf;
    for (std::size_t i = 0; i < sc.planes.size(); ++i) {
      const double dist = std::abs(plane_offset(sc.planes[i].plane, x.p));
      if (dist < best) {
        best = dist;
        active = static_cast<int>(i);
      }
    }
    const Plane true_plane = oriented_toward(sc.planes[active].plane, pose.t);
    row.plane_idx = active;
    row.true_n = true_plane.n;
    row.true_d = true_plane.d;
    row.e_n = std::acos(std::clamp(true_plane.n.dot(est.plane_global.n), -1.0, 1.0));
    row.e_d_global = true_plane.d - est.plane_global.d;
    const Plane true_cam = transform_plane(pose.inverse(), sc.planes[active].plane);
    row.e_d_cam = true_cam.d - est.plane_cam.d;

    std::optional<Vec3> yaw_target_normal;
    if (sc.mode == RunMode::ClosedLoop) {
      if (k % sample_every == 0) {
        const GammaResult gr =
            max_feasible_gamma(sampled, chi_now, terminal_xbar, pose, spec, sc.controller);
        if (gr.stalled) trace.events.push_back({k, "gamma: stalled estimate update"});
        sampled = sample_update(sampled, chi_now, gr.gamma);
      }
      row.gamma = sampled.last_gamma;
      row.chi_s = sampled.chi_s;

      const EstimateView sampled_view = make_view(sampled.chi_s, pose, sc.chi_min, k);
      yaw_target_normal = sampled_view.plane_global.n;

      spec = advance_reference(spec, x.p);
      row.n_a = spec.n_a;

      TrackingProblem prob;
      try {
        prob = build_tracking(sampled_view.plane_global, spec, sc.controller);
      } catch (const ControlError& e) {
        throw SimError(e.what(), k);
      }

      if (k % sc.camera.control_every == 0) {
        try {
          QpWarmStart next_warm;
          const MpcSolution sol =
              solve_mpc(x, prob, spec.bounds, sc.controller.qp, warm, &next_warm);
          warm = next_warm;
          u = sol.controls.front();
          // Execution-side projection: the emitted control satisfies the
          // actuation box and keeps the next velocity inside its bound
          // exactly, independent of the solver's residual level.
          const double scale =
              spec.bounds.b == NormType::Two ? 1.0 / std::sqrt(3.0) : 1.0;
          for (int ax = 0; ax < 3; ++ax) {
            const double u_cap = spec.bounds.u_max * scale;
            const double v_cap = spec.bounds.v_max * scale;
            const double lo_u = std::max(-u_cap, (-v_cap - x.v[ax]) / dt);
            const double hi_u = std::min(u_cap, (v_cap - x.v[ax]) / dt);
            if (lo_u <= hi_u) u[ax] = std::clamp(u[ax], lo_u, hi_u);
          }
          terminal_xbar = lift(sol.states.back());
          row.qp_status = static_cast<int>(sol.diag.status);
          row.qp_iterations = sol.diag.iterations;
          row.qp_objective = sol.diag.objective;
          row.qp_violation = sol.diag.constraint_violation;
          row.qp_slack = sol.diag.terminal_slack;
        } catch (const ControlError& e) {
          throw SimError(e.what(), k);
        }
      }
      row.u = u;

      // Tracking error against the true active plane, same references.
      try {
        const TrackingProblem truth = build_tracking(true_plane, spec, sc.controller);
        row.e = tracking_error(truth, x);
      } catch (const ControlError&) {
        row.e = Vec3::Zero();
      }
    } else {
      u = Vec3::Zero();
      row.gamma = 1.0;
      row.chi_s = chi_now;
      if (sc.camera.policy == YawPolicy::AlignToEstimate) {
        yaw_target_normal = est.plane_global.n;
      }
    }

    trace.rows.push_back(row);

    // Commit the motion for [k, k+1) and feed the observer the exact
    // realized interval twist (Assumption: exact odometry).
    const PlatformState x_next = platform_step(x, u, dt);
    const double new_yaw =
        yaw_update(yaw, sc.camera.policy, yaw_target_normal, dt, sc.camera.yaw_rate_limit);
    yaw_rate = (new_yaw - yaw) / dt;
    const Vec3 omega_global(0.0, 0.0, yaw_rate);
    const Mat3 yaw_only = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    const Vec3 v_mid_global =
        (x_next.p - x.p) / dt + omega_global.cross(yaw_only * sc.camera.mounting_offset);
    CameraTwist twist;
    twist.v = pose.R.transpose() * v_mid_global;
    twist.omega = pose.R.transpose() * omega_global;
    if (sc.estimator == EstimatorKind::Adaptive) {
      try {
        obs = observer_step_exact(obs, twist, dt);
      } catch (const std::exception& e) {
        throw SimError(e.what(), k);
      }
    }
    prev_twist = twist;
    x = x_next;
    yaw = new_yaw;
  }
  guard.disarm = true;
  return trace;
}

Trace run(const Scenario& sc) { return run_with_seed(sc, sc.seed); }

}  // namespace inspectsim
