#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace inspectsim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Thrown when a geometric precondition is violated (zero normal,
/// degenerate plane, non-orthonormal rotation, ...).
class GeometryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

constexpr double kUnitTol = 1e-9;

/// Oriented plane {n, d}: a point p lies on the plane iff n.p + d = 0.
/// Canonical form has d > 0; for d == 0 the first nonzero component of n
/// is positive. This removes the (n,d) ~ (-n,-d) sign ambiguity of the
/// homogeneous coefficients.
struct Plane {
  Vec3 n = Vec3::UnitZ();
  double d = 0.0;
};

bool is_canonical(const Plane& p, double tol = kUnitTol);

/// Renormalizes n and fixes the sign so the result is canonical.
/// Throws GeometryError on a zero normal.
Plane canonicalize(const Plane& p);

/// Signed offset n.p + d of a point from the plane.
double plane_offset(const Plane& p, const Vec3& point);

/// Same point set, signed so that `point` lies on the nonnegative side.
/// The canonical form anchors the sign at the global origin, which flips
/// when a plane (or a transient estimate) crosses it; direction-sensitive
/// consumers orient to the observer side instead.
Plane oriented_toward(const Plane& p, const Vec3& point);

/// Minimal plane parameter chi = -n/d. Requires d != 0.
Vec3 chi_of_plane(const Plane& p);

/// Rigid transform p_out = R * p_in + t. Convention in this project:
/// maps camera-frame points into the global frame.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  Vec3 apply(const Vec3& p) const { return R * p + t; }
  RigidTransform inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  RigidTransform operator*(const RigidTransform& other) const {
    return {R * other.R, R * other.t + t};
  }
};

/// Throws GeometryError unless R is a proper rotation within tol.
void validate_rotation(const Mat3& R, double tol = kUnitTol);

/// Maps plane coefficients with M^{-T}: the returned (canonical) plane
/// contains exactly the M-images of the input plane's points.
Plane transform_plane(const RigidTransform& M, const Plane& plane);

/// Image feature in normalized pinhole coordinates (x, y) = (X/Z, Y/Z).
struct Feature {
  int id = -1;
  Vec2 s = Vec2::Zero();
};

/// Pinhole frustum. Angles in radians, 0 < fov < pi. z_min keeps the
/// projection away from the Z = 0 blow-up.
struct CameraModel {
  double hfov;
  double vfov;
  double z_min = 1e-6;

  double tan_half_h() const { return std::tan(0.5 * hfov); }
  double tan_half_v() const { return std::tan(0.5 * vfov); }
};

/// Projects a camera-frame point; empty when behind the camera or
/// outside the frustum.
std::optional<Vec2> project(const Vec3& point_camera, const CameraModel& cam);

/// Inverse depth 1/Z of the ray through feature s, for a plane given in
/// the camera frame: chi^T [x, y, 1]. Positive iff the ray hits the
/// plane in front of the camera. Throws on d == 0.
double inverse_depth(const Plane& plane_c, const Vec2& s);

/// Axis-aligned rectangle in the plane's in-plane basis (see plane_basis).
struct PlaneExtent {
  double u_min = 0.0, u_max = 0.0;
  double v_min = 0.0, v_max = 0.0;

  bool degenerate() const { return !(u_max > u_min) || !(v_max > v_min); }
};

/// Deterministic in-plane frame: origin is the plane point closest to the
/// global origin, e_u = normalize(z x n) (x-axis fallback when n ~ z),
/// e_v = n x e_u.
void plane_basis(const Plane& p, Vec3& origin, Vec3& e_u, Vec3& e_v);

Vec3 plane_point(const Plane& p, double u, double v);

/// In-plane (u, v) coordinates of a point's projection onto the plane.
Vec2 plane_uv(const Plane& p, const Vec3& point);

/// Uniform deterministic samples on the extent; all results satisfy
/// n.p + d = 0 within 1e-9. Throws on count < 1 or a degenerate extent.
std::vector<Vec3> sample_plane_points(const Plane& plane_g, const PlaneExtent& extent, int count,
                                      std::uint64_t seed);

}  // namespace inspectsim
