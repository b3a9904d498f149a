#include "inspectsim/geometry.hpp"

#include "inspectsim/rng.hpp"

#include <cmath>

namespace inspectsim {

bool is_canonical(const Plane& p, double tol) {
  if (std::abs(p.n.norm() - 1.0) > tol) return false;
  if (p.d > 0.0) return true;
  if (p.d < 0.0) return false;
  for (int i = 0; i < 3; ++i) {
    if (p.n[i] != 0.0) return p.n[i] > 0.0;
  }
  return false;
}

Plane canonicalize(const Plane& p) {
  const double norm = p.n.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw GeometryError("canonicalize: zero or non-finite plane normal");
  }
  Plane out{p.n / norm, p.d / norm};
  bool flip = out.d < 0.0;
  if (out.d == 0.0) {
    for (int i = 0; i < 3; ++i) {
      if (out.n[i] != 0.0) {
        flip = out.n[i] < 0.0;
        break;
      }
    }
  }
  if (flip) {
    out.n = -out.n;
    out.d = -out.d;
  }
  return out;
}

double plane_offset(const Plane& p, const Vec3& point) { return p.n.dot(point) + p.d; }

Plane oriented_toward(const Plane& p, const Vec3& point) {
  if (plane_offset(p, point) < 0.0) return Plane{-p.n, -p.d};
  return p;
}

Vec3 chi_of_plane(const Plane& p) {
  if (p.d == 0.0) throw GeometryError("chi_of_plane: plane through the origin has no chi");
  return -p.n / p.d;
}

void validate_rotation(const Mat3& R, double tol) {
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
    throw GeometryError("rotation is not orthonormal");
  }
  if (std::abs(R.determinant() - 1.0) > tol) {
    throw GeometryError("rotation has det != +1");
  }
}

Plane transform_plane(const RigidTransform& M, const Plane& plane) {
  // [n'; d'] = M^{-T} [n; d] for M acting on points. Expanded:
  // n' = R n, d' = d - t.(R n).
  const Vec3 n_out = M.R * plane.n;
  const double d_out = plane.d - M.t.dot(n_out);
  return canonicalize({n_out, d_out});
}

std::optional<Vec2> project(const Vec3& point_camera, const CameraModel& cam) {
  const double z = point_camera.z();
  if (!(z > cam.z_min)) return std::nullopt;
  const double x = point_camera.x() / z;
  const double y = point_camera.y() / z;
  if (std::abs(x) > cam.tan_half_h() || std::abs(y) > cam.tan_half_v()) return std::nullopt;
  return Vec2(x, y);
}

double inverse_depth(const Plane& plane_c, const Vec2& s) {
  if (plane_c.d == 0.0) throw GeometryError("inverse_depth: degenerate plane through camera center");
  const Vec3 s_bar(s.x(), s.y(), 1.0);
  return chi_of_plane(plane_c).dot(s_bar);
}

void plane_basis(const Plane& p, Vec3& origin, Vec3& e_u, Vec3& e_v) {
  const Plane c = canonicalize(p);
  origin = -c.d * c.n;
  Vec3 u = Vec3::UnitZ().cross(c.n);
  if (u.norm() < 1e-9) u = Vec3::UnitX().cross(c.n);
  e_u = u.normalized();
  e_v = c.n.cross(e_u);
}

Vec3 plane_point(const Plane& p, double u, double v) {
  Vec3 origin, e_u, e_v;
  plane_basis(p, origin, e_u, e_v);
  return origin + u * e_u + v * e_v;
}

Vec2 plane_uv(const Plane& p, const Vec3& point) {
  Vec3 origin, e_u, e_v;
  plane_basis(p, origin, e_u, e_v);
  const Vec3 r = point - origin;
  return Vec2(e_u.dot(r), e_v.dot(r));
}

std::vector<Vec3> sample_plane_points(const Plane& plane_g, const PlaneExtent& extent, int count,
                                      std::uint64_t seed) {
  if (count < 1) throw GeometryError("sample_plane_points: count must be >= 1");
  if (extent.degenerate()) throw GeometryError("sample_plane_points: degenerate extent");
  Vec3 origin, e_u, e_v;
  plane_basis(plane_g, origin, e_u, e_v);
  Rng rng(mix_seed(seed, 0x706c616e65ull));
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform(extent.u_min, extent.u_max);
    const double v = rng.uniform(extent.v_min, extent.v_max);
    out.push_back(origin + u * e_u + v * e_v);
  }
  return out;
}

}  // namespace inspectsim
