#pragma once

#include "sfr/frame.hpp"
#include "sfr/geometry.hpp"
#include "sfr/mesh.hpp"

#include <string>
#include <vector>

namespace sfr {

struct TextureSpec {
  enum class Kind { Uniform, Checker, Noise };
  Kind kind = Kind::Uniform;
  double scale = 0.5;  // meters per checker cell / noise feature
  Vec3 color_a{0.75, 0.75, 0.75};
  Vec3 color_b{0.35, 0.35, 0.35};
};

struct Primitive {
  enum class Kind { Rect, Box, Sphere };
  Kind kind = Kind::Rect;
  // Rect: finite textured rectangle.
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 tangent = Vec3::UnitX();
  Vec2 half_extent = Vec2::Ones();
  // Box: axis-aligned.
  Vec3 bmin = Vec3::Zero(), bmax = Vec3::Zero();
  // Sphere.
  double radius = 0.0;
  TextureSpec tex;
  int appear_frame = 0;  // hidden before this frame index
};

struct PointLight {
  Vec3 position = Vec3::Zero();
  double intensity = 0.5;
};

struct TrajectorySpec {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  double height = 1.5;
  int frames = 2;
  double fps = 30.0;
  double start_angle = 0.0;
  double span = 2.0 * kPi;
  double pitch = 0.0;  // radians, positive looks down
  bool look_outward = true;
};

struct SceneNoiseSpec {
  double kappa = 0.0;       // sigma = kappa * d^2
  double dropout = 0.0;     // probability a valid depth becomes invalid
  double quant_step = 0.0;  // meters; 0 disables quantization
};

struct SceneSpec {
  std::string name;
  std::vector<Primitive> primitives;
  std::vector<PointLight> lights;
  double ambient = 0.3;
  TrajectorySpec trajectory;
  SceneNoiseSpec noise;
  Intrinsics k;
};

Pose trajectory_pose(const TrajectorySpec& traj, int frame_index);

// Exact ray-cast depth + Lambertian shading; gt pose from the trajectory.
std::pair<RawFrame, Pose> render_ground_truth(const SceneSpec& spec, int frame_index);

RawFrame corrupt(const RawFrame& frame, const SceneNoiseSpec& noise, std::uint64_t seed);

TriangleMesh ground_truth_mesh(const SceneSpec& spec, int sphere_subdiv = 4);

// Canonical specs: "plane-box", "room", "two-stage".
SceneSpec make_scene(const std::string& name, int width = 320, int height = 240);

// Ray-cast a single world ray (origin, unnormalized dir). Returns the
// parameter t of the nearest hit, its world normal and shaded color, or
// t <= 0 when nothing is hit. Exposed for tests.
struct RayHit {
  double t = -1.0;
  Vec3 normal = Vec3::Zero();
  Vec3 albedo = Vec3::Zero();
  bool valid() const { return t > 0.0; }
};
RayHit cast_ray(const SceneSpec& spec, const Vec3& origin, const Vec3& dir, int frame_index);

}  // namespace sfr
