#include "sfr/scene.hpp"

#include "sfr/parallel.hpp"

#include <cmath>
#include <unordered_map>

namespace sfr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double hash01(std::uint64_t x) { return double(splitmix64(x) >> 11) / 9007199254740992.0; }

// 2D value noise, two octaves, deterministic.
double value_noise(double u, double v, std::uint64_t salt) {
  double sum = 0.0, amp = 0.65, freq = 1.0;
  for (int oct = 0; oct < 2; ++oct) {
    const double x = u * freq, y = v * freq;
    const std::int64_t xi = std::int64_t(std::floor(x)), yi = std::int64_t(std::floor(y));
    const double fx = x - xi, fy = y - yi;
    const double sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
    const auto corner = [&](std::int64_t a, std::int64_t b) {
      return hash01(splitmix64(std::uint64_t(a) * 0x8DA6B343 + std::uint64_t(b) * 0xD8163841) ^ salt);
    };
    const double n00 = corner(xi, yi), n10 = corner(xi + 1, yi);
    const double n01 = corner(xi, yi + 1), n11 = corner(xi + 1, yi + 1);
    sum += amp * ((n00 * (1 - sx) + n10 * sx) * (1 - sy) + (n01 * (1 - sx) + n11 * sx) * sy);
    amp *= 0.4;
    freq *= 3.0;
  }
  return std::clamp(sum, 0.0, 1.0);
}

Vec3 texture_color(const TextureSpec& tex, double u, double v, std::uint64_t salt) {
  switch (tex.kind) {
    case TextureSpec::Kind::Uniform:
      return tex.color_a;
    case TextureSpec::Kind::Checker: {
      const std::int64_t cu = std::int64_t(std::floor(u / tex.scale));
      const std::int64_t cv = std::int64_t(std::floor(v / tex.scale));
      return ((cu + cv) & 1) ? tex.color_b : tex.color_a;
    }
    case TextureSpec::Kind::Noise: {
      const double w = value_noise(u / tex.scale, v / tex.scale, salt);
      return tex.color_a * w + tex.color_b * (1.0 - w);
    }
  }
  return tex.color_a;
}

struct PrimHit {
  double t = -1.0;
  Vec3 normal;
  Vec2 uv;
};

PrimHit intersect_rect(const Primitive& pr, const Vec3& o, const Vec3& d) {
  PrimHit hit;
  const double denom = pr.normal.dot(d);
  if (std::abs(denom) < 1e-12) return hit;
  const double t = pr.normal.dot(pr.center - o) / denom;
  if (t <= 1e-9) return hit;
  const Vec3 p = o + t * d - pr.center;
  const Vec3 bitangent = pr.normal.cross(pr.tangent);
  const double u = p.dot(pr.tangent), v = p.dot(bitangent);
  if (std::abs(u) > pr.half_extent.x() || std::abs(v) > pr.half_extent.y()) return hit;
  hit.t = t;
  hit.normal = denom < 0 ? pr.normal : Vec3(-pr.normal);
  hit.uv = {u, v};
  return hit;
}

PrimHit intersect_box(const Primitive& pr, const Vec3& o, const Vec3& d) {
  PrimHit hit;
  double t0 = 1e-9, t1 = std::numeric_limits<double>::max();
  int axis0 = -1;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (o[i] < pr.bmin[i] || o[i] > pr.bmax[i]) return hit;
      continue;
    }
    double ta = (pr.bmin[i] - o[i]) / d[i];
    double tb = (pr.bmax[i] - o[i]) / d[i];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = i;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return hit;
  }
  if (axis0 < 0) return hit;  // origin inside the box
  hit.t = t0;
  const Vec3 p = o + t0 * d;
  Vec3 n = Vec3::Zero();
  n[axis0] = d[axis0] > 0 ? -1.0 : 1.0;
  hit.normal = n;
  const int ua = (axis0 + 1) % 3, va = (axis0 + 2) % 3;
  hit.uv = {p[ua], p[va]};
  return hit;
}

PrimHit intersect_sphere(const Primitive& pr, const Vec3& o, const Vec3& d) {
  PrimHit hit;
  const Vec3 oc = o - pr.center;
  const double a = d.squaredNorm();
  const double b = 2.0 * oc.dot(d);
  const double c = oc.squaredNorm() - pr.radius * pr.radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0.0) return hit;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / (2 * a);
  if (t <= 1e-9) t = (-b + sq) / (2 * a);
  if (t <= 1e-9) return hit;
  hit.t = t;
  hit.normal = (o + t * d - pr.center).normalized();
  hit.uv = {std::atan2(hit.normal.y(), hit.normal.x()) * pr.radius,
            std::acos(std::clamp(hit.normal.z(), -1.0, 1.0)) * pr.radius};
  return hit;
}

}  // namespace

RayHit cast_ray(const SceneSpec& spec, const Vec3& origin, const Vec3& dir, int frame_index) {
  RayHit best;
  best.t = std::numeric_limits<double>::max();
  int best_prim = -1;
  PrimHit best_hit;
  for (int i = 0; i < int(spec.primitives.size()); ++i) {
    const Primitive& pr = spec.primitives[i];
    if (pr.appear_frame > frame_index) continue;
    PrimHit h;
    switch (pr.kind) {
      case Primitive::Kind::Rect: h = intersect_rect(pr, origin, dir); break;
      case Primitive::Kind::Box: h = intersect_box(pr, origin, dir); break;
      case Primitive::Kind::Sphere: h = intersect_sphere(pr, origin, dir); break;
    }
    if (h.t > 0.0 && h.t < best.t) {
      best.t = h.t;
      best_prim = i;
      best_hit = h;
    }
  }
  if (best_prim < 0) {
    best.t = -1.0;
    return best;
  }
  best.normal = best_hit.normal;
  best.albedo = texture_color(spec.primitives[best_prim].tex, best_hit.uv.x(),
                              best_hit.uv.y(), std::uint64_t(best_prim) * 7919);
  return best;
}

Pose trajectory_pose(const TrajectorySpec& traj, int frame_index) {
  const double phi =
      traj.start_angle + traj.span * double(frame_index) / std::max(1, traj.frames);
  const Vec3 radial(std::cos(phi), std::sin(phi), 0.0);
  const Vec3 eye = traj.center + traj.radius * radial + Vec3(0, 0, traj.height);

  Vec3 forward = traj.look_outward ? radial : Vec3(-radial);
  // Tilt by pitch toward the floor.
  forward = (forward * std::cos(traj.pitch) - Vec3::UnitZ() * std::sin(traj.pitch)).normalized();

  const Vec3 x_cam = forward.cross(Vec3::UnitZ()).normalized();
  const Vec3 y_cam = forward.cross(x_cam);  // points down for an upright camera
  Mat3 rot;
  rot.col(0) = x_cam;
  rot.col(1) = y_cam;
  rot.col(2) = forward;
  Pose pose;
  pose.q = Quat(rot).normalized();
  pose.t = eye;
  return pose;
}

std::pair<RawFrame, Pose> render_ground_truth(const SceneSpec& spec, int frame_index) {
  if (frame_index >= spec.trajectory.frames)
    throw PreconditionError("render_ground_truth: frame index out of range");
  const Pose pose = trajectory_pose(spec.trajectory, frame_index);
  const Intrinsics& k = spec.k;
  RawFrame frame;
  frame.frame_id = frame_index;
  frame.timestamp = frame_index / spec.trajectory.fps;
  frame.color = ImageRgb8(k.width, k.height, {0, 0, 0});
  frame.depth = ImageD(k.width, k.height, 0.0);

  const Mat3 rot = pose.rotation();
  parallel_ranges(0, k.height, k.height, [&](int, std::int64_t y0, std::int64_t y1) {
    for (int y = int(y0); y < int(y1); ++y) {
      for (int x = 0; x < k.width; ++x) {
        const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
        const Vec3 dir = rot * dir_cam;
        const RayHit hit = cast_ray(spec, pose.t, dir, frame_index);
        if (!hit.valid()) continue;
        frame.depth.at(x, y) = hit.t;  // dir_cam.z == 1, so t is z-depth
        const Vec3 p = pose.t + hit.t * dir;
        double light = spec.ambient;
        for (const PointLight& l : spec.lights) {
          const Vec3 to_l = l.position - p;
          light += l.intensity * std::max(0.0, hit.normal.dot(to_l.normalized()));
        }
        const Vec3 c = (hit.albedo * light).cwiseMin(1.0).cwiseMax(0.0);
        frame.color.at(x, y) = {std::uint8_t(std::lround(c.x() * 255)),
                                std::uint8_t(std::lround(c.y() * 255)),
                                std::uint8_t(std::lround(c.z() * 255))};
      }
    }
  });
  return {std::move(frame), pose};
}

RawFrame corrupt(const RawFrame& frame, const SceneNoiseSpec& noise, std::uint64_t seed) {
  RawFrame out = frame;
  if (noise.kappa == 0.0 && noise.dropout == 0.0 && noise.quant_step == 0.0) return out;
  for (size_t i = 0; i < out.depth.size(); ++i) {
    double d = out.depth[i];
    if (d <= 0.0) continue;
    const std::uint64_t base = splitmix64(seed ^ (std::uint64_t(i) * 0x9E3779B97F4A7C15ull));
    if (noise.dropout > 0.0 && hash01(base ^ 0x1) < noise.dropout) {
      out.depth[i] = 0.0;
      continue;
    }
    if (noise.kappa > 0.0) {
      // Box-Muller from two deterministic uniforms.
      const double u1 = std::max(hash01(base ^ 0x2), 1e-12);
      const double u2 = hash01(base ^ 0x3);
      const double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
      d += noise.kappa * d * d * g;
    }
    if (noise.quant_step > 0.0) d = std::round(d / noise.quant_step) * noise.quant_step;
    out.depth[i] = d > 0.0 ? d : 0.0;
  }
  return out;
}

namespace {

void add_rect_mesh(TriangleMesh& mesh, const Primitive& pr) {
  const Vec3 bt = pr.normal.cross(pr.tangent);
  const Vec3 du = pr.tangent * pr.half_extent.x();
  const Vec3 dv = bt * pr.half_extent.y();
  const int base = int(mesh.vertices.size());
  mesh.vertices.push_back(pr.center - du - dv);
  mesh.vertices.push_back(pr.center + du - dv);
  mesh.vertices.push_back(pr.center + du + dv);
  mesh.vertices.push_back(pr.center - du + dv);
  mesh.faces.push_back({base, base + 1, base + 2});
  mesh.faces.push_back({base, base + 2, base + 3});
}

void add_box_mesh(TriangleMesh& mesh, const Primitive& pr) {
  const int base = int(mesh.vertices.size());
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.push_back(Vec3(i & 1 ? pr.bmax.x() : pr.bmin.x(),
                                 i & 2 ? pr.bmax.y() : pr.bmin.y(),
                                 i & 4 ? pr.bmax.z() : pr.bmin.z()));
  }
  static const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                  {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    mesh.faces.push_back({base + q[0], base + q[1], base + q[2]});
    mesh.faces.push_back({base + q[0], base + q[2], base + q[3]});
  }
}

void add_sphere_mesh(TriangleMesh& mesh, const Primitive& pr, int subdiv) {
  // Icosphere: subdivide an icosahedron, projecting onto the sphere.
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                             {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                             {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (Vec3& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},
      {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
      {3, 2, 6},  {3, 6, 8},  {3, 8, 9},   {4, 9, 5},  {2, 4, 11},  {6, 2, 10},
      {8, 6, 7},  {9, 8, 1}};
  for (int level = 0; level < subdiv; ++level) {
    std::unordered_map<std::uint64_t, int> midpoint;
    const auto mid = [&](int a, int b) {
      const std::uint64_t key =
          (std::uint64_t(std::min(a, b)) << 32) | std::uint64_t(std::max(a, b));
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const int idx = int(verts.size());
      verts.push_back(((verts[a] + verts[b]) / 2.0).normalized());
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  const int base = int(mesh.vertices.size());
  for (const Vec3& v : verts) mesh.vertices.push_back(pr.center + pr.radius * v);
  for (const auto& f : faces)
    mesh.faces.push_back({base + f[0], base + f[1], base + f[2]});
}

}  // namespace

TriangleMesh ground_truth_mesh(const SceneSpec& spec, int sphere_subdiv) {
  TriangleMesh mesh;
  for (const Primitive& pr : spec.primitives) {
    switch (pr.kind) {
      case Primitive::Kind::Rect: add_rect_mesh(mesh, pr); break;
      case Primitive::Kind::Box: add_box_mesh(mesh, pr); break;
      case Primitive::Kind::Sphere: add_sphere_mesh(mesh, pr, sphere_subdiv); break;
    }
  }
  return mesh;
}

namespace {

Primitive rect(const Vec3& center, const Vec3& normal, const Vec3& tangent,
               const Vec2& half_extent, TextureSpec tex) {
  Primitive p;
  p.kind = Primitive::Kind::Rect;
  p.center = center;
  p.normal = normal.normalized();
  p.tangent = (tangent - tangent.dot(p.normal) * p.normal).normalized();
  p.half_extent = half_extent;
  p.tex = tex;
  return p;
}

Primitive box(const Vec3& bmin, const Vec3& bmax, TextureSpec tex) {
  Primitive p;
  p.kind = Primitive::Kind::Box;
  p.bmin = bmin;
  p.bmax = bmax;
  p.tex = tex;
  return p;
}

Primitive sphere(const Vec3& center, double radius, TextureSpec tex) {
  Primitive p;
  p.kind = Primitive::Kind::Sphere;
  p.center = center;
  p.radius = radius;
  p.tex = tex;
  return p;
}

TextureSpec checker(double scale, const Vec3& a, const Vec3& b) {
  return {TextureSpec::Kind::Checker, scale, a, b};
}

TextureSpec noise_tex(double scale, const Vec3& a, const Vec3& b) {
  return {TextureSpec::Kind::Noise, scale, a, b};
}

}  // namespace

SceneSpec make_scene(const std::string& name, int width, int height) {
  SceneSpec spec;
  spec.name = name;
  spec.k.width = width;
  spec.k.height = height;
  spec.k.fx = spec.k.fy = 0.85 * width;
  spec.k.cx = (width - 1) / 2.0;
  spec.k.cy = (height - 1) / 2.0;
  spec.k.depth_scale = 5000.0;

  if (name == "plane-box") {
    // A wall, a floor, and a box: three independent normal directions for
    // well-conditioned point-to-plane alignment, checker texture for corners.
    spec.primitives = {
        rect({0, 2.5, 1.0}, {0, -1, 0}, {1, 0, 0}, {3.0, 1.6},
             checker(0.18, {0.78, 0.72, 0.62}, {0.38, 0.36, 0.4})),
        rect({0, 1.0, -0.2}, {0, 0, 1}, {1, 0, 0}, {3.0, 2.0},
             checker(0.24, {0.62, 0.66, 0.7}, {0.3, 0.32, 0.36})),
        box({-0.45, 1.35, 0.15}, {0.35, 2.05, 0.95},
            checker(0.13, {0.75, 0.5, 0.35}, {0.35, 0.22, 0.18})),
    };
    spec.lights = {{{1.5, -0.8, 2.2}, 0.5}, {{-1.6, 0.2, 2.4}, 0.4}};
    spec.trajectory.center = {0, -2.0, 0.55};
    spec.trajectory.radius = 0.35;
    spec.trajectory.height = 0.0;
    spec.trajectory.frames = 12;
    spec.trajectory.start_angle = kPi / 2.0;  // eye ~(0, -1.65, 0.55)
    spec.trajectory.span = deg2rad(18.0);
    spec.trajectory.look_outward = true;
    spec.trajectory.pitch = deg2rad(-4.0);
    spec.noise.kappa = 0.0;
  } else if (name == "room") {
    const double half = 3.0, h = 3.0;
    spec.primitives = {
        rect({0, half, h / 2}, {0, -1, 0}, {1, 0, 0}, {half, h / 2},
             checker(0.5, {0.8, 0.74, 0.64}, {0.5, 0.46, 0.42})),
        rect({0, -half, h / 2}, {0, 1, 0}, {1, 0, 0}, {half, h / 2},
             checker(0.5, {0.64, 0.72, 0.8}, {0.4, 0.46, 0.52})),
        rect({half, 0, h / 2}, {-1, 0, 0}, {0, 1, 0}, {half, h / 2},
             checker(0.45, {0.76, 0.66, 0.66}, {0.46, 0.4, 0.4})),
        rect({-half, 0, h / 2}, {1, 0, 0}, {0, 1, 0}, {half, h / 2},
             checker(0.45, {0.68, 0.78, 0.68}, {0.42, 0.48, 0.42})),
        rect({0, 0, 0}, {0, 0, 1}, {1, 0, 0}, {half, half},
             noise_tex(0.5, {0.68, 0.62, 0.55}, {0.42, 0.38, 0.34})),
        rect({0, 0, h}, {0, 0, -1}, {1, 0, 0}, {half, half},
             noise_tex(0.9, {0.85, 0.85, 0.85}, {0.6, 0.6, 0.62})),
        box({1.9, -2.6, 0.0}, {2.8, -1.7, 1.1},
            checker(0.22, {0.72, 0.5, 0.34}, {0.4, 0.26, 0.18})),
        box({-2.7, 1.6, 0.0}, {-1.8, 2.7, 0.8},
            checker(0.2, {0.42, 0.5, 0.66}, {0.24, 0.28, 0.38})),
        box({-2.6, -2.7, 0.0}, {-2.0, -2.1, 1.5},
            checker(0.18, {0.62, 0.62, 0.5}, {0.36, 0.36, 0.28})),
        sphere({2.2, 2.2, 0.45}, 0.45,
               noise_tex(0.25, {0.75, 0.55, 0.5}, {0.45, 0.3, 0.28})),
    };
    spec.lights = {{{1.4, 1.0, 2.6}, 0.5}, {{-1.5, -1.2, 2.7}, 0.45}};
    spec.ambient = 0.35;
    spec.trajectory.center = {0, 0, 0};
    spec.trajectory.radius = 1.0;
    spec.trajectory.height = 1.5;
    spec.trajectory.frames = 200;
    spec.trajectory.span = 2.0 * kPi;
    spec.trajectory.look_outward = true;
    spec.trajectory.pitch = deg2rad(8.0);
    spec.noise.kappa = 0.002;
    spec.noise.dropout = 0.01;
    spec.noise.quant_step = 1.0 / 5000.0;
  } else if (name == "two-stage") {
    spec.primitives = {
        rect({0, 2.5, 0.8}, {0, -1, 0}, {1, 0, 0}, {2.5, 1.5},
             checker(0.2, {0.75, 0.7, 0.62}, {0.4, 0.38, 0.36})),
        rect({0, 1.0, -0.6}, {0, 0, 1}, {1, 0, 0}, {2.5, 1.8},
             checker(0.25, {0.6, 0.64, 0.7}, {0.32, 0.34, 0.38})),
        box({-0.4, 1.2, -0.1}, {0.4, 1.9, 0.6},
            checker(0.15, {0.7, 0.45, 0.3}, {0.34, 0.2, 0.16})),
    };
    spec.primitives[2].appear_frame = 2;  // the box shows up mid-sequence
    spec.lights = {{{1.0, -1.0, 2.0}, 0.5}, {{-1.0, 0.0, 2.2}, 0.4}};
    spec.trajectory.center = {0, -2.2, 0.3};
    spec.trajectory.radius = 0.15;
    spec.trajectory.height = 0.0;
    spec.trajectory.frames = 4;
    spec.trajectory.start_angle = kPi / 2.0;
    spec.trajectory.span = deg2rad(2.0);
    spec.trajectory.look_outward = true;
    spec.noise.kappa = 0.0;
  } else {
    throw PreconditionError("make_scene: unknown scene name '" + name + "'");
  }
  return spec;
}

}  // namespace sfr
