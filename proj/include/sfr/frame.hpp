#pragma once

#include "sfr/geometry.hpp"
#include "sfr/image.hpp"

#include <vector>

namespace sfr {

// Invalid depth is stored as 0 and carried as an explicit mask after load.
struct RawFrame {
  ImageRgb8 color;
  ImageD depth;  // meters, 0 = invalid
  double timestamp = 0.0;
  int frame_id = 0;
};

struct BilateralParams {
  int radius = 2;            // 5x5 window
  double sigma_spatial = 2.0;  // pixels
  double sigma_range = 0.03;   // meters
};

struct PyramidLevel {
  Intrinsics k;
  ImageF intensity;
  ImageD depth;
  ImageV3 vertex;
  ImageV3 normal;
  ImageU8 valid;
};

struct ProcessedFrame {
  RawFrame raw;
  Intrinsics k;
  ImageF intensity;  // [0,1] grayscale of raw.color
  ImageD depth;      // filtered
  ImageV3 vertex_map;
  ImageV3 normal_map;
  ImageU8 valid_mask;
  std::vector<PyramidLevel> pyramid;  // level 0 references full resolution

  int frame_id() const { return raw.frame_id; }
  double timestamp() const { return raw.timestamp; }
};

ImageD filter_depth(const ImageD& depth, const BilateralParams& params = {}, int threads = 0);

ImageV3 compute_vertex_map(const ImageD& depth, const Intrinsics& k);

// Normals from central differences of the vertex map, camera-facing
// (n . v < 0). Returns the normal map and updates valid in place.
ImageV3 compute_normal_map(const ImageV3& vertex, ImageU8& valid);

ImageF intensity_of(const ImageRgb8& color);

std::vector<PyramidLevel> build_pyramid(const ProcessedFrame& frame, int levels);

ProcessedFrame process_frame(RawFrame raw, const Intrinsics& k, int pyramid_levels,
                             bool bilateral = true, int threads = 0);

// World-frame vertex and normal maps.
std::pair<ImageV3, ImageV3> transform_to_world(const ProcessedFrame& frame, const Pose& pose);

}  // namespace sfr
