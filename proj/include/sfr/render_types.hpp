#pragma once

#include "sfr/image.hpp"

#include <vector>

namespace sfr {

struct RenderOptions {
  int tile_size = 32;
  bool keep_contributors = false;
  double near_plane = 0.05;       // meters
  double alpha_clamp = 0.999;
  double termination_T = 1e-4;    // stop blending once transmittance drops below
  double min_weight = 1.1108996538242306e-2;  // exp(-4.5), the 3-sigma cutoff
  double eps_px = 1e-3;           // accumulated opacity below which a pixel is invalid
  int threads = 0;                // <= 0: default_threads()
};

// One blended splat at a pixel, in front-to-back order.
struct Contributor {
  int surfel_id;
  double alpha;      // opacity-weighted gaussian, after clamping
  double ray_depth;  // camera-frame z of the ray/disk intersection
};

struct RenderOutput {
  int width = 0, height = 0;
  ImageV3 color;      // [0,1] rgb
  ImageD depth;       // meters; valid only where valid != 0
  ImageV3 normal;     // unit, camera frame; valid only where valid != 0
  ImageD alpha_acc;   // 1 - T_{n+1}
  ImageU8 valid;      // alpha_acc >= eps_px

  // Per-pixel contributor lists (CSR), populated when keep_contributors is set.
  bool has_contributors = false;
  std::vector<int> contrib_offset;  // size width*height + 1
  std::vector<Contributor> contrib;
};

}  // namespace sfr
