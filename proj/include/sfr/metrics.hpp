#pragma once

#include "sfr/geometry.hpp"
#include "sfr/image.hpp"
#include "sfr/mesh.hpp"
#include "sfr/surfel.hpp"

#include <vector>

namespace sfr {

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

using Trajectory = std::vector<TimedPose>;

// Absolute trajectory error in cm: rigid (no-scale) alignment of associated
// positions, then translational RMSE. Association tolerance 20 ms.
double ate_rmse_cm(const Trajectory& estimated, const Trajectory& ground_truth,
                   double assoc_tol = 0.02);

struct ReconReport {
  double accuracy_cm = 0.0;
  double accuracy_ratio_pct = 0.0;
  double completeness_cm = 0.0;
  double completeness_ratio_pct = 0.0;
  int pred_samples = 0;
  int gt_samples = 0;
};

// Points drawn from surfel disks: area-weighted surfel choice, in-plane
// gaussian truncated at 1 sigma. Deterministic under seed.
std::vector<Vec3> sample_surfel_points(const SurfelMap& map, int n, std::uint64_t seed);

// accuracy: mean predicted-point -> gt-surface distance; completeness: mean
// gt-surface-sample -> predicted-point distance; ratios under tau (percent).
ReconReport recon_metrics(const std::vector<Vec3>& pred, const TriangleMesh& gt,
                          double tau = 0.03, std::uint64_t seed = 1);

double psnr(const ImageV3& a, const ImageV3& b);  // +inf on identical images
double ssim(const ImageV3& a, const ImageV3& b);

}  // namespace sfr
