#include "sfr/fusion.hpp"

#include "sfr/parallel.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace sfr {

ObsModel observation_matrix(const Pose& cam_to_world) {
  const Pose wc = cam_to_world.inverse();
  return {wc.rotation(), wc.t};
}

Vec6 noise_covariance(double d, const NoiseParams& np) {
  if (!(d > 0.0)) throw PreconditionError("noise_covariance: depth must be positive");
  const double vp = sqr(np.sigma_p(d));
  const double vn = sqr(np.sigma_n(d));
  Vec6 v;
  v << vp, vp, vp, vn, vn, vn;
  return v;
}

InfoUpdateResult info_update(const Vec6& lambda, const Vec6& eta, const Measurement& z,
                             const ObsModel& obs, const Vec6& sigma_z) {
  if ((lambda.array() < 0.0).any())
    throw PreconditionError("info_update: lambda must be nonnegative");
  if ((sigma_z.array() <= 0.0).any())
    throw PreconditionError("info_update: sigma_z must be positive");

  // Per-block isotropy makes H^T Lambda_z H == Lambda_z (R sigma^-2 I R^T).
  const double wp = 1.0 / sigma_z[0];
  const double wn = 1.0 / sigma_z[3];

  InfoUpdateResult out;
  out.lambda = lambda;
  out.lambda.head<3>().array() += wp;
  out.lambda.tail<3>().array() += wn;

  // eta += H^T Lambda_z (z - t_bar)
  const Vec3 zp = obs.R_wc.transpose() * (z.z.head<3>() - obs.t_wc);
  const Vec3 zn = obs.R_wc.transpose() * z.z.tail<3>();
  out.eta = eta;
  out.eta.head<3>() += wp * zp;
  out.eta.tail<3>() += wn * zn;

  if ((out.lambda.array() <= 0.0).any())
    throw DegenerateInput("info_update: uninitialized state component");
  out.x_hat = out.eta.cwiseQuotient(out.lambda);
  out.sigma_hat = out.lambda.cwiseInverse();
  return out;
}

DenseInfoState info_update_general(const DenseInfoState& prior, const Vec6& z,
                                   const Mat6& H, const Vec6& t_bar, const Mat6& Sigma_z) {
  const Mat6 Lambda_z = Sigma_z.inverse();
  DenseInfoState out;
  out.Lambda = prior.Lambda + H.transpose() * Lambda_z * H;
  out.eta = prior.eta + H.transpose() * Lambda_z * (z - t_bar);
  return out;
}

bool apply_state(Surfel& surfel, const Vec6& x_hat) {
  if (!x_hat.allFinite()) return false;
  const Vec3 n_raw = x_hat.tail<3>();
  const double len = n_raw.norm();
  if (len < 1e-12) return false;

  surfel.p = x_hat.head<3>();
  const Vec3 n_t = n_raw / len;
  const Vec3 n_g = surfel.normal();
  const Mat3 delta = rotation_between_normals_safe(n_g, n_t);
  surfel.r = (Quat(delta) * surfel.r).normalized();

  // Keep state == Lambda^-1 eta with the normal on the unit sphere.
  surfel.eta.head<3>() = surfel.lambda.head<3>().cwiseProduct(surfel.p);
  surfel.eta.tail<3>() = surfel.lambda.tail<3>().cwiseProduct(n_t);
  return true;
}

FusionStats fuse_frame(SurfelMap& map, const ProcessedFrame& frame, const Pose& pose,
                       const RenderOutput& render, const NoiseParams& np,
                       const FusionConfig& cfg, int threads) {
  const std::vector<int> visible = select_visible(map, pose, frame.k);
  const std::vector<int> surface =
      select_surface(map, visible, render, pose, frame.k, cfg.delta_s);

  const ObsModel obs = observation_matrix(pose);
  const int n = int(surface.size());

  struct PendingUpdate {
    int id = -1;
    Vec6 lambda, eta, x_hat;
  };
  std::vector<PendingUpdate> pending(n);
  std::vector<std::uint8_t> skip_invalid(n, 0), skip_occluded(n, 0);

  const int chunks = std::max(1, std::min(n, 64));
  parallel_ranges(0, n, chunks, [&](int, std::int64_t lo, std::int64_t hi) {
    const Pose world_to_cam = pose.inverse();
    for (int i = int(lo); i < int(hi); ++i) {
      const int id = surface[i];
      const Surfel& s = map[id];
      const Vec3 p_cam = world_to_cam * s.p;
      const Vec2 u = project(frame.k, p_cam);
      const int ix = int(std::lround(u.x())), iy = int(std::lround(u.y()));
      if (!frame.valid_mask.contains(ix, iy) || !frame.valid_mask.at(ix, iy)) {
        skip_invalid[i] = 1;
        continue;
      }
      const double d = frame.depth.at(ix, iy);
      // Re-measurement test against the observed depth under the current view.
      if (std::abs(d - p_cam.z()) >= cfg.delta_s) {
        skip_occluded[i] = 1;
        continue;
      }
      Measurement m;
      m.u = u;
      m.d = d;
      m.z.head<3>() = frame.vertex_map.at(ix, iy);
      m.z.tail<3>() = frame.normal_map.at(ix, iy);
      const InfoUpdateResult r = info_update(s.lambda, s.eta, m, obs, noise_covariance(d, np));
      pending[i] = {id, r.lambda, r.eta, r.x_hat};
    }
  }, threads);

  // Single-writer commit in deterministic order.
  FusionStats stats;
  double pos_change = 0.0;
  for (int i = 0; i < n; ++i) {
    if (skip_invalid[i]) {
      ++stats.skipped_invalid;
      continue;
    }
    if (skip_occluded[i]) {
      ++stats.skipped_occluded;
      continue;
    }
    const PendingUpdate& u = pending[i];
    Surfel updated = map[u.id];
    updated.lambda = u.lambda;
    updated.eta = u.eta;
    if (!apply_state(updated, u.x_hat)) {
      ++stats.skipped_invalid;
      continue;
    }
    updated.last_observed = frame.frame_id();
    pos_change += (updated.p - map[u.id].p).norm();
    map.mutate(u.id) = updated;
    map.set_anchor(u.id, updated.p, updated.normal());
    map.commit(u.id);
    ++stats.fused;
  }
  stats.mean_position_change = stats.fused > 0 ? pos_change / stats.fused : 0.0;
  return stats;
}

}  // namespace sfr
