#pragma once

#include "sfr/geometry.hpp"
#include "sfr/image.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace sfr {

using Descriptor = std::array<std::uint64_t, 4>;  // 256-bit binary descriptor

inline int hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += __builtin_popcountll(a[i] ^ b[i]);
  return d;
}

struct Keypoint {
  Vec2 px;
  double response = 0.0;
  double angle = 0.0;  // radians, intensity-centroid orientation
  Descriptor desc{};
};

struct FeatureConfig {
  double fast_threshold = 0.06;  // intensity in [0,1]
  int max_keypoints = 1000;
  int border = 20;  // keep descriptors inside the image
};

// FAST-style corner detection (9 contiguous of 16) with 3x3 non-max
// suppression, intensity-centroid orientation, and a rotation-steered
// 256-bit BRIEF descriptor on a smoothed image.
std::vector<Keypoint> detect_and_describe(const ImageF& intensity,
                                          const FeatureConfig& cfg = {});

}  // namespace sfr
