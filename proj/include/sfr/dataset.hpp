#pragma once

#include "sfr/frame.hpp"
#include "sfr/geometry.hpp"
#include "sfr/metrics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace sfr {

// TUM on-disk layout: rgb.txt / depth.txt index files, 16-bit depth PNGs.
struct DatasetHandle {
  std::string root;
  Intrinsics intrinsics;
  struct Assoc {
    double timestamp;
    std::string color_path;
    std::string depth_path;
  };
  std::vector<Assoc> frames;
  std::optional<Trajectory> ground_truth;
  int dropped_associations = 0;

  size_t size() const { return frames.size(); }
};

// Associates rgb and depth by nearest timestamp within 20 ms; unmatched
// entries are dropped (counted). Throws IoError when index files are missing
// or nothing associates.
DatasetHandle load_tum(const std::string& root);

RawFrame load_frame(const DatasetHandle& ds, int index);

// Writes frames + gt trajectory in the same layout (used by `synth`).
struct TumWriter {
  explicit TumWriter(const std::string& root, const Intrinsics& k);
  void add(const RawFrame& frame, const Pose& gt_pose);
  void finalize();

  std::string root;
  Intrinsics k;
  std::vector<std::string> rgb_lines, depth_lines, gt_lines;
};

Trajectory load_trajectory(const std::string& path);
void save_trajectory(const Trajectory& traj, const std::string& path);

// Default intrinsics used when a dataset directory carries no calibration
// file (TUM fr-class camera).
Intrinsics default_tum_intrinsics();

}  // namespace sfr
