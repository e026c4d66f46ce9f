#pragma once

#include "sfr/features.hpp"
#include "sfr/frame.hpp"
#include "sfr/geometry.hpp"
#include "sfr/render_types.hpp"

#include <optional>
#include <vector>

namespace sfr {

struct Landmark {
  Vec3 x_world = Vec3::Zero();
  Descriptor desc{};
  int observations = 1;
  int last_seen = 0;
};

struct LandmarkMap {
  std::vector<Landmark> landmarks;
  int capacity = 20000;
};

struct Correspondence {
  Vec2 pixel;
  Vec3 x_world;
  int hamming = 0;
  int landmark_id = -1;
  int keypoint_id = -1;
};
using CorrespondenceSet = std::vector<Correspondence>;

struct TrackerConfig {
  FeatureConfig features;
  int match_radius = 24;        // pixels
  double ratio_test = 0.8;
  int max_hamming = 72;
  double tau_huber = 3.0;       // pixels
  double tau_inlier = 5.0;      // pixels
  int min_inliers = 10;
  int lm_iterations = 10;
  double assoc_dist = 0.10;     // meters
  double assoc_angle_deg = 30.0;
  int assoc_floor = 100;
  double lambda_photo = 0.1;
  double tau_step = 1e-5;
  int n_pyr = 2;
  int l_pyr = 3;
  double t_k = 0.3;             // meters
  double theta_k_deg = 20.0;
};

struct StageResidual {
  double initial = 0.0;
  double final = 0.0;
  int count = 0;
};

struct TrackResult {
  Pose pose;
  Twist twist = Twist::Zero();
  int inliers = 0;
  StageResidual sparse, icp, photo;
  bool sparse_ok = false;
  bool accepted = false;  // dense-stage acceptance
  double last_step_norm = 0.0;
};

// World-frame model maps rendered once per frame, downsampled per level.
struct ModelLevel {
  Intrinsics k;
  ImageV3 vertex_w;
  ImageV3 normal_w;
  ImageF intensity;
  ImageF grad_x, grad_y;
  ImageU8 valid;
};
using ModelMaps = std::vector<ModelLevel>;

ModelMaps build_model_maps(const RenderOutput& render, const Pose& render_pose,
                           const Intrinsics& k, int levels);

CorrespondenceSet match_2d3d(const std::vector<Keypoint>& keypoints,
                             const LandmarkMap& landmarks, const Pose& prior,
                             const Intrinsics& k, const TrackerConfig& cfg);

struct SparseResult {
  Pose pose;
  Twist twist = Twist::Zero();
  std::vector<int> inlier_ids;
  StageResidual residual;
};

// Huber-robust LM on the reprojection error. nullopt on failure (too few
// correspondences or inliers); the caller falls back to the prior.
std::optional<SparseResult> sparse_pose_init(const CorrespondenceSet& matches,
                                             const Pose& prior, const Intrinsics& k,
                                             const TrackerConfig& cfg);

bool convergence_check(const std::vector<double>& residuals, double last_step_norm,
                       int association_count, const TrackerConfig& cfg);

// Coarse-to-fine damped Gauss-Newton on E_icp + lambda_photo * E_photo with
// projective data association against the model maps.
TrackResult dense_align(const ProcessedFrame& frame, const ModelMaps& model,
                        const Pose& model_pose, const Pose& init,
                        const TrackerConfig& cfg, int threads = 0);

bool keyframe_decision(const Pose& pose, const Pose& last_keyframe, double t_k,
                       double theta_k_rad);

void update_landmarks(const std::vector<Keypoint>& keypoints, const ProcessedFrame& frame,
                      const Pose& pose, int frame_id, LandmarkMap& landmarks,
                      const TrackerConfig& cfg);

}  // namespace sfr
