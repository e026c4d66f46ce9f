#pragma once

#include "sfr/frame.hpp"
#include "sfr/geometry.hpp"
#include "sfr/render_types.hpp"
#include "sfr/surfel.hpp"

namespace sfr {

// Depth-dependent measurement noise: sigma = kappa * d^2.
struct NoiseParams {
  double kappa_p = 0.002;  // 1/m, position
  double kappa_n = 0.02;   // 1/m^2, normal

  double sigma_p(double d) const { return kappa_p * d * d; }
  double sigma_n(double d) const { return kappa_n * d * d; }
};

// Camera-frame vertex + normal observation of one surfel.
struct Measurement {
  Vec6 z;    // [V_t(u); N_t(u)]
  Vec2 u;    // pixel
  double d;  // depth at u, meters
};

// Observation model z = H x + t_bar + eps with H = blockdiag(R_wc, R_wc) and
// t_bar = [t_wc; 0].
struct ObsModel {
  Mat3 R_wc;
  Vec3 t_wc;

  Mat6 H() const {
    Mat6 h = Mat6::Zero();
    h.topLeftCorner<3, 3>() = R_wc;
    h.bottomRightCorner<3, 3>() = R_wc;
    return h;
  }
  Vec6 t_bar() const {
    Vec6 t = Vec6::Zero();
    t.head<3>() = t_wc;
    return t;
  }
  Vec6 apply(const Vec6& x_world) const {
    Vec6 z;
    z.head<3>() = R_wc * x_world.head<3>() + t_wc;
    z.tail<3>() = R_wc * x_world.tail<3>();
    return z;
  }
};

ObsModel observation_matrix(const Pose& cam_to_world);

// Diagonal of Sigma_z (variances): [sigma_p^2 x3, sigma_n^2 x3].
Vec6 noise_covariance(double d, const NoiseParams& np);

struct InfoUpdateResult {
  Vec6 lambda;     // updated information diagonal
  Vec6 eta;        // updated information vector
  Vec6 x_hat;      // posterior mean
  Vec6 sigma_hat;  // posterior variance diagonal
};

// Recursive information-filter update, diagonal fast path. Requires sigma_z
// to be isotropic within each 3-block (which noise_covariance guarantees), so
// H^T Lambda_z H stays diagonal.
InfoUpdateResult info_update(const Vec6& lambda, const Vec6& eta, const Measurement& z,
                             const ObsModel& obs, const Vec6& sigma_z);

// General dense-matrix form of the same update; reference path for oracles
// and for non-isotropic noise.
struct DenseInfoState {
  Mat6 Lambda;
  Vec6 eta;
};
DenseInfoState info_update_general(const DenseInfoState& prior, const Vec6& z,
                                   const Mat6& H, const Vec6& t_bar, const Mat6& Sigma_z);

// Writes the posterior mean into the surfel: position directly, normal via
// the relative rotation about n_g x n_t applied on the left of the current
// rotation. Rescales the eta normal block so state == Lambda^-1 eta holds on
// the unit sphere. Returns false (surfel untouched) on a degenerate normal.
bool apply_state(Surfel& surfel, const Vec6& x_hat);

struct FusionConfig {
  double delta_s = 0.03;  // surface thickness / re-measurement threshold
};

struct FusionStats {
  int fused = 0;
  int skipped_invalid = 0;
  int skipped_occluded = 0;
  double mean_position_change = 0.0;  // meters, over fused surfels
};

FusionStats fuse_frame(SurfelMap& map, const ProcessedFrame& frame, const Pose& pose,
                       const RenderOutput& render, const NoiseParams& np,
                       const FusionConfig& cfg, int threads = 0);

}  // namespace sfr
