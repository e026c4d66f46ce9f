#pragma once

#include "sfr/common.hpp"

namespace sfr {

// Pinhole camera model. depth_scale is the raw-depth-units-per-meter divisor
// used by dataset loaders (TUM: 5000).
struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  double depth_scale = 5000.0;

  void validate() const;
  bool contains(const Vec2& u) const {
    return u.x() >= 0.0 && u.x() < width && u.y() >= 0.0 && u.y() < height;
  }
  // Intrinsics of pyramid level l (each level halves both dimensions).
  // Pixel centers: u_0 = 2^l * u_l + (2^l - 1) / 2.
  Intrinsics level(int l) const;
};

// Rigid transform stored as unit quaternion + translation. By convention a
// camera pose maps camera-frame points to world-frame points.
struct Pose {
  Quat q = Quat::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }

  Mat3 rotation() const { return q.toRotationMatrix(); }
  Vec3 operator*(const Vec3& x) const { return q * x + t; }
  Vec3 rotate(const Vec3& v) const { return q * v; }

  Pose operator*(const Pose& rhs) const {
    Pose out;
    out.q = (q * rhs.q).normalized();
    out.t = q * rhs.t + t;
    return out;
  }
  Pose inverse() const {
    Pose out;
    out.q = q.conjugate();
    out.t = -(out.q * t);
    return out;
  }
  Mat4 matrix() const;

  // Viewing direction in world coordinates (z-axis of the rotation).
  Vec3 z_axis() const { return q * Vec3::UnitZ(); }

  double rotation_angle_to(const Pose& other) const;
  double translation_to(const Pose& other) const { return (t - other.t).norm(); }
};

// se(3) coordinates, [translation; rotation].
using Twist = Vec6;

Mat3 skew(const Vec3& v);

Pose exp_se3(const Twist& xi);
Twist log_se3(const Pose& pose);  // throws DegenerateInput at rotation angle ~ pi

Mat3 exp_so3(const Vec3& omega);

Vec2 project(const Intrinsics& k, const Vec3& x_cam);  // throws DegenerateInput if z <= 0
Vec3 backproject(const Intrinsics& k, const Vec2& u, double depth);  // throws PreconditionError

Mat3 rodrigues(const Vec3& axis, double theta);  // axis must be unit

// Deterministic unit vector orthogonal to n: Gram-Schmidt of the canonical
// basis vector with the smallest |component| of n.
Vec3 any_orthonormal(const Vec3& n);

// Rotation mapping n_g onto n_t about the axis n_g x n_t. Near-parallel pairs
// return identity; antipodal pairs throw DegenerateInput.
Mat3 rotation_between_normals(const Vec3& n_g, const Vec3& n_t);

// Same, but antipodal pairs rotate by pi about a deterministic orthogonal axis.
Mat3 rotation_between_normals_safe(const Vec3& n_g, const Vec3& n_t);

}  // namespace sfr
