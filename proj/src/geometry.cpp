#include "sfr/geometry.hpp"

#include <cmath>

namespace sfr {

namespace {
constexpr double kParallelEps = 1e-8;  // radians below which normals count as parallel
}

void Intrinsics::validate() const {
  if (fx <= 0 || fy <= 0) throw PreconditionError("intrinsics: focal lengths must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw PreconditionError("intrinsics: principal point outside image");
  if (depth_scale <= 0) throw PreconditionError("intrinsics: depth_scale must be positive");
}

Intrinsics Intrinsics::level(int l) const {
  Intrinsics k = *this;
  const double f = double(1 << l);
  const double off = (f - 1.0) / 2.0;
  k.fx = fx / f;
  k.fy = fy / f;
  k.cx = (cx - off) / f;
  k.cy = (cy - off) / f;
  k.width = width >> l;
  k.height = height >> l;
  return k;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation();
  m.topRightCorner<3, 1>() = t;
  return m;
}

double Pose::rotation_angle_to(const Pose& other) const {
  const double c = std::abs(q.dot(other.q));
  return 2.0 * std::acos(std::min(1.0, c));
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Mat3 exp_so3(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  if (theta < 1e-9) {
    // 2nd-order Taylor keeps orthogonality to ~1e-18 here
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * w + b * w * w;
}

Pose exp_se3(const Twist& xi) {
  const Vec3 v = xi.head<3>();
  const Vec3 omega = xi.tail<3>();
  const double theta = omega.norm();
  const Mat3 w = skew(omega);

  Mat3 rot;
  Mat3 V;
  if (theta < 1e-9) {
    rot = Mat3::Identity() + w + 0.5 * w * w;
    V = Mat3::Identity() + 0.5 * w + (1.0 / 6.0) * w * w;
  } else {
    const double t2 = theta * theta;
    rot = exp_so3(omega);
    V = Mat3::Identity() + ((1.0 - std::cos(theta)) / t2) * w +
        ((theta - std::sin(theta)) / (t2 * theta)) * w * w;
  }
  Pose out;
  out.q = Quat(rot).normalized();
  out.t = V * v;
  return out;
}

Twist log_se3(const Pose& pose) {
  const Mat3 rot = pose.rotation();
  const double cos_theta = std::clamp((rot.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta > kPi - 1e-6)
    throw DegenerateInput("log_se3: rotation angle at pi is not representable");

  Vec3 omega;
  if (theta < 1e-9) {
    omega = 0.5 * Vec3(rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1));
  } else {
    const double s = theta / (2.0 * std::sin(theta));
    omega = s * Vec3(rot(2, 1) - rot(1, 2), rot(0, 2) - rot(2, 0), rot(1, 0) - rot(0, 1));
  }

  const Mat3 w = skew(omega);
  Mat3 V_inv;
  if (theta < 1e-9) {
    V_inv = Mat3::Identity() - 0.5 * w + (1.0 / 12.0) * w * w;
  } else {
    const double half = theta / 2.0;
    const double cot_half = std::cos(half) / std::sin(half);
    V_inv = Mat3::Identity() - 0.5 * w +
            ((1.0 - half * cot_half) / (theta * theta)) * w * w;
  }
  Twist xi;
  xi.head<3>() = V_inv * pose.t;
  xi.tail<3>() = omega;
  return xi;
}

Vec2 project(const Intrinsics& k, const Vec3& x_cam) {
  if (!(x_cam.z() > 0.0)) throw DegenerateInput("project: point not in front of camera");
  return {k.fx * x_cam.x() / x_cam.z() + k.cx, k.fy * x_cam.y() / x_cam.z() + k.cy};
}

Vec3 backproject(const Intrinsics& k, const Vec2& u, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth))
    throw PreconditionError("backproject: depth must be finite and positive");
  return {(u.x() - k.cx) / k.fx * depth, (u.y() - k.cy) / k.fy * depth, depth};
}

Mat3 rodrigues(const Vec3& axis, double theta) {
  if (std::abs(axis.norm() - 1.0) > 1e-9)
    throw PreconditionError("rodrigues: axis must be unit length");
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return c * Mat3::Identity() + (1.0 - c) * axis * axis.transpose() + s * skew(axis);
}

Vec3 any_orthonormal(const Vec3& n) {
  int smallest = 0;
  double best = std::abs(n.x());
  if (std::abs(n.y()) < best) {
    smallest = 1;
    best = std::abs(n.y());
  }
  if (std::abs(n.z()) < best) smallest = 2;
  Vec3 e = Vec3::Zero();
  e[smallest] = 1.0;
  return (e - e.dot(n) * n).normalized();
}

Mat3 rotation_between_normals(const Vec3& n_g, const Vec3& n_t) {
  const double d = std::clamp(n_g.dot(n_t), -1.0, 1.0);
  const double theta = std::acos(d);
  if (theta < kParallelEps) return Mat3::Identity();
  if (theta > kPi - kParallelEps)
    throw DegenerateInput("rotation_between_normals: antipodal normals have no unique axis");
  const Vec3 axis = n_g.cross(n_t).normalized();
  return rodrigues(axis, theta);
}

Mat3 rotation_between_normals_safe(const Vec3& n_g, const Vec3& n_t) {
  const double d = std::clamp(n_g.dot(n_t), -1.0, 1.0);
  if (std::acos(d) > kPi - kParallelEps) return rodrigues(any_orthonormal(n_g), kPi);
  return rotation_between_normals(n_g, n_t);
}

}  // namespace sfr
