#pragma once

#include "inspectsim/rng.hpp"
#include "inspectsim/scenario.hpp"
#include "inspectsim/trace.hpp"

#include <optional>

namespace inspectsim {

/// Runtime failure inside a simulation run, tagged with the tick index.
class SimError : public std::runtime_error {
public:
  SimError(const std::string& what, int tick_index)
      : std::runtime_error(what + " (tick " + std::to_string(tick_index) + ")"), tick(tick_index) {}
  int tick;
};

/// Camera orientation for a yaw angle: optical axis z_c points along the
/// heading [cos yaw, sin yaw, 0], image right x_c stays horizontal and
/// image down y_c points along -z (image up = world up).
Mat3 camera_rotation_from_yaw(double yaw);

/// Camera pose: position is the platform position plus the body-mounted
/// offset rotated by yaw.
RigidTransform camera_pose(const PlatformState& x, const Vec3& mounting_offset, double yaw);

/// One slew-limited yaw update. Align mode steers the optical axis toward
/// -n_hat projected to the x-y plane; a degenerate projection (or a fixed
/// policy) holds the previous yaw.
double yaw_update(double yaw, YawPolicy policy, const std::optional<Vec3>& n_hat_global, double dt,
                  double rate_limit);

/// Synthetic feature field: static per-plane point sets, or replenished
/// sets that keep the per-plane visible count at the configured target by
/// spawning points inside the current frustum footprint. Geometry draws
/// come from the scenario seed; measurement noise from noise_seed, so a
/// noise-seed override leaves noiseless outputs untouched.
class World {
public:
  World(const Scenario& sc, std::uint64_t noise_seed);

  /// Spawns replacement points (replenish mode) for the given pose.
  void replenish(const RigidTransform& pose);

  /// Visible features sorted by id; measurement noise (diagonal
  /// covariance sigma_s) is drawn in id order from the world stream.
  std::vector<Feature> render(const RigidTransform& pose, const Vec2& sigma_s_cov);

  int plane_of_feature(int id) const;
  int visible_count_of_plane(const RigidTransform& pose, int plane_idx) const;

private:
  struct Point {
    int id;
    int plane_idx;
    Vec3 p;
    bool active = true;
    int invisible_ticks = 0;
  };

  bool visible(const RigidTransform& pose, const Vec3& p) const;
  /// Spawn rectangle (clipped to the wall extent) and the fraction of the
  /// frustum footprint it covers.
  std::optional<std::pair<PlaneExtent, double>> spawn_box(const RigidTransform& pose,
                                                          const PlaneSpec& ps) const;

  const Scenario& sc_;
  std::vector<Point> points_;
  std::vector<int> plane_of_id_;
  int next_id_ = 0;
  Rng rng_geometry_;
  Rng rng_noise_;
};

/// Executes a scenario deterministically; identical scenario + seed give
/// bitwise-identical traces. Controller errors and observer numeric
/// failures surface as SimError with the tick attached; when partial_out
/// is given, the rows recorded before the failure are preserved there.
Trace run(const Scenario& sc);

/// Variant with a noise-seed override (keeps the scenario unchanged).
Trace run_with_seed(const Scenario& sc, std::uint64_t seed, Trace* partial_out = nullptr);

}  // namespace inspectsim
