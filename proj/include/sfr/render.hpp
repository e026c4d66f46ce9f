#pragma once

#include "sfr/geometry.hpp"
#include "sfr/render_types.hpp"
#include "sfr/surfel.hpp"

#include <optional>

namespace sfr {

// Camera-frame view of one surfel ready for splatting.
struct SplatFootprint {
  int surfel_id = -1;
  Vec3 p_cam = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();  // unit tangent axes, camera frame
  Vec3 axis_v = Vec3::UnitY();
  Vec3 normal_cam = Vec3::UnitZ();
  Vec2 scale = Vec2::Ones();  // meters along axis_u / axis_v
  double opacity = 1.0;
  Vec3 rgb = Vec3::Zero();  // view-dependent color for this camera
  Vec2 mean_px = Vec2::Zero();
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // clipped bbox, [x0,x1) x [y0,y1)
};

// Returns nullopt when the surfel is culled (behind the near plane,
// back-facing, or its 3-sigma footprint misses the image).
std::optional<SplatFootprint> project_surfel(const Surfel& surfel, int id,
                                             const Pose& cam_to_world, const Intrinsics& k,
                                             const RenderOptions& opts, int sh_order = 1);

// Ray/disk-plane intersection at pixel px. Returns (gaussian weight, camera z
// of the intersection); weight is 0 outside 3 sigma or for grazing rays.
std::pair<double, double> splat_weight(const SplatFootprint& fp, const Vec2& px,
                                       const Intrinsics& k);

// Serial reference path (single tile, single thread).
RenderOutput render(const SurfelMap& map, const Pose& pose, const Intrinsics& k,
                    const RenderOptions& opts = {}, int sh_order = 1);

// Tile-parallel path; bitwise identical to render().
RenderOutput render_tiled(const SurfelMap& map, const Pose& pose, const Intrinsics& k,
                          const RenderOptions& opts = {}, int sh_order = 1);

// Shared implementation; exposed for the rare caller that wants to control
// both the decomposition and thread count.
RenderOutput render_core(const SurfelMap& map, const Pose& pose, const Intrinsics& k,
                         const RenderOptions& opts, int tile_size, int threads, int sh_order);

}  // namespace sfr
