#pragma once

#include "sfr/config.hpp"
#include "sfr/dataset.hpp"
#include "sfr/metrics.hpp"
#include "sfr/surfel.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sfr {

struct FrameTiming {
  int frame_id = 0;
  double preprocess_ms = 0, sparse_ms = 0, dense_ms = 0, render_ms = 0, fusion_ms = 0,
         init_ms = 0, optimize_ms = 0, total_ms = 0;
};

struct RunResult {
  Trajectory trajectory;
  Trajectory keyframes;
  std::vector<FrameTiming> timing;
  int surfel_count = 0;
  int fused_total = 0;
  double fps = 0.0;
};

// Frame source abstraction so synthetic scenes and on-disk datasets run
// through the same pipeline.
struct FrameSource {
  Intrinsics intrinsics;
  int count = 0;
  std::function<RawFrame(int)> load;
};

FrameSource source_from_dataset(const DatasetHandle& ds);

class Pipeline {
 public:
  Pipeline(const Config& cfg, const Intrinsics& k);

  // Processes one frame; returns the estimated camera-to-world pose.
  Pose process(RawFrame raw);

  const SurfelMap& map() const { return map_; }
  SurfelMap& map() { return map_; }
  const Trajectory& trajectory() const { return trajectory_; }
  const Trajectory& keyframes() const { return keyframes_; }
  const std::vector<FrameTiming>& timing() const { return timing_; }
  int fused_total() const { return fused_total_; }

 private:
  Config cfg_;
  Intrinsics k_;
  SurfelMap map_;
  LandmarkMap landmarks_;
  KeyframeWindow window_;
  OptimizerState opt_state_;
  Trajectory trajectory_;
  Trajectory keyframes_;
  std::vector<FrameTiming> timing_;
  Pose last_pose_, prev_pose_;
  Pose last_keyframe_pose_;
  bool has_pose_ = false, has_prev_ = false, has_keyframe_ = false;
  int keyframes_since_opt_ = 0;
  int fused_total_ = 0;
};

// Full run: pipeline over every frame, artifacts written to out_dir
// (trajectory.txt, keyframes.txt, surfels.ply, timing.csv, config.cfg,
// renders/kf_*.png).
RunResult run_pipeline(const FrameSource& source, const Config& cfg,
                       const std::string& out_dir, bool verbose = false);

}  // namespace sfr
