#include "sfr/tracking.hpp"

#include "sfr/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace sfr {

ModelMaps build_model_maps(const RenderOutput& render, const Pose& render_pose,
                           const Intrinsics& k, int levels) {
  ModelMaps maps(levels);
  const Mat3 R = render_pose.rotation();

  ModelLevel& l0 = maps[0];
  l0.k = k;
  const int w = render.width, h = render.height;
  l0.vertex_w = ImageV3(w, h, Vec3::Zero());
  l0.normal_w = ImageV3(w, h, Vec3::Zero());
  l0.intensity = ImageF(w, h, 0.f);
  l0.valid = ImageU8(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3& c = render.color.at(x, y);
      l0.intensity.at(x, y) = float(0.299 * c.x() + 0.587 * c.y() + 0.114 * c.z());
      if (!render.valid.at(x, y)) continue;
      const double d = render.depth.at(x, y);
      if (d <= 0.0) continue;
      const Vec3 v_cam((x - k.cx) / k.fx * d, (y - k.cy) / k.fy * d, d);
      l0.vertex_w.at(x, y) = R * v_cam + render_pose.t;
      l0.normal_w.at(x, y) = R * render.normal.at(x, y);
      l0.valid.at(x, y) = 1;
    }
  }

  for (int l = 1; l < levels; ++l) {
    const ModelLevel& prev = maps[l - 1];
    ModelLevel& cur = maps[l];
    cur.k = k.level(l);
    const int cw = cur.k.width, ch = cur.k.height;
    cur.vertex_w = ImageV3(cw, ch, Vec3::Zero());
    cur.normal_w = ImageV3(cw, ch, Vec3::Zero());
    cur.intensity = ImageF(cw, ch, 0.f);
    cur.valid = ImageU8(cw, ch, 0);
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) {
        float acc = 0.f;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int px = 2 * x + dx, py = 2 * y + dy;
            if (px < prev.k.width && py < prev.k.height) {
              acc += prev.intensity.at(px, py);
              ++n;
            }
          }
        cur.intensity.at(x, y) = acc / float(n);
        if (prev.valid.at(2 * x, 2 * y)) {
          cur.vertex_w.at(x, y) = prev.vertex_w.at(2 * x, 2 * y);
          cur.normal_w.at(x, y) = prev.normal_w.at(2 * x, 2 * y);
          cur.valid.at(x, y) = 1;
        }
      }
    }
  }

  for (ModelLevel& ml : maps) {
    const int lw = ml.k.width, lh = ml.k.height;
    ml.grad_x = ImageF(lw, lh, 0.f);
    ml.grad_y = ImageF(lw, lh, 0.f);
    for (int y = 1; y < lh - 1; ++y)
      for (int x = 1; x < lw - 1; ++x) {
        ml.grad_x.at(x, y) = 0.5f * (ml.intensity.at(x + 1, y) - ml.intensity.at(x - 1, y));
        ml.grad_y.at(x, y) = 0.5f * (ml.intensity.at(x, y + 1) - ml.intensity.at(x, y - 1));
      }
  }
  return maps;
}

CorrespondenceSet match_2d3d(const std::vector<Keypoint>& keypoints,
                             const LandmarkMap& landmarks, const Pose& prior,
                             const Intrinsics& k, const TrackerConfig& cfg) {
  CorrespondenceSet out;
  if (landmarks.landmarks.empty() || keypoints.empty()) return out;

  // Bucket keypoints so the radius search stays local.
  const double cell = std::max(1, cfg.match_radius);
  const int gw = int(k.width / cell) + 1, gh = int(k.height / cell) + 1;
  std::vector<std::vector<int>> grid(size_t(gw) * gh);
  for (int i = 0; i < int(keypoints.size()); ++i) {
    const int cx = int(keypoints[i].px.x() / cell), cy = int(keypoints[i].px.y() / cell);
    grid[size_t(cy) * gw + cx].push_back(i);
  }

  const Pose world_to_cam = prior.inverse();
  const double r2 = sqr(double(cfg.match_radius));
  for (int li = 0; li < int(landmarks.landmarks.size()); ++li) {
    const Landmark& lm = landmarks.landmarks[li];
    const Vec3 p_cam = world_to_cam * lm.x_world;
    if (p_cam.z() <= 0.0) continue;
    const Vec2 u = project(k, p_cam);
    if (!k.contains(u)) continue;
    const int cx = int(u.x() / cell), cy = int(u.y() / cell);
    int best = -1, best_d = 257, second_d = 257;
    for (int gy = std::max(0, cy - 1); gy <= std::min(gh - 1, cy + 1); ++gy) {
      for (int gx = std::max(0, cx - 1); gx <= std::min(gw - 1, cx + 1); ++gx) {
        for (int ki : grid[size_t(gy) * gw + gx]) {
          if ((keypoints[ki].px - u).squaredNorm() > r2) continue;
          const int d = hamming(lm.desc, keypoints[ki].desc);
          if (d < best_d) {
            second_d = best_d;
            best_d = d;
            best = ki;
          } else if (d < second_d) {
            second_d = d;
          }
        }
      }
    }
    if (best < 0 || best_d > cfg.max_hamming) continue;
    if (second_d < 257 && double(best_d) > cfg.ratio_test * double(second_d)) continue;
    out.push_back({keypoints[best].px, lm.x_world, best_d, li, best});
  }
  return out;
}

namespace {

double huber_cost(double e, double tau) {
  return e <= tau ? 0.5 * e * e : tau * (e - 0.5 * tau);
}

struct ReprojectionEval {
  double cost = 0.0;
  Mat6 H = Mat6::Zero();
  Vec6 g = Vec6::Zero();
};

ReprojectionEval eval_reprojection(const CorrespondenceSet& matches, const Pose& t_cw,
                                   const Intrinsics& k, double tau_huber) {
  ReprojectionEval ev;
  const Mat3 R = t_cw.rotation();
  for (const Correspondence& m : matches) {
    const Vec3 x = R * m.x_world + t_cw.t;
    if (x.z() <= 1e-6) {
      ev.cost += huber_cost(1e3, tau_huber);
      continue;
    }
    const Vec2 proj(k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy);
    const Vec2 r = m.pixel - proj;
    const double e = r.norm();
    ev.cost += huber_cost(e, tau_huber);
    const double w = e <= tau_huber ? 1.0 : tau_huber / e;

    Eigen::Matrix<double, 2, 3> dproj;
    const double iz = 1.0 / x.z();
    dproj << k.fx * iz, 0, -k.fx * x.x() * iz * iz, 0, k.fy * iz, -k.fy * x.y() * iz * iz;
    Eigen::Matrix<double, 3, 6> dx;
    dx.leftCols<3>() = Mat3::Identity();
    dx.rightCols<3>() = -skew(x);
    const Eigen::Matrix<double, 2, 6> J = -dproj * dx;  // r = u - proj
    ev.H += w * J.transpose() * J;
    ev.g += w * J.transpose() * r;
  }
  return ev;
}

}  // namespace

std::optional<SparseResult> sparse_pose_init(const CorrespondenceSet& matches,
                                             const Pose& prior, const Intrinsics& k,
                                             const TrackerConfig& cfg) {
  if (int(matches.size()) < 4) return std::nullopt;

  Pose t_cw = prior.inverse();
  double lambda = 1e-4;
  ReprojectionEval ev = eval_reprojection(matches, t_cw, k, cfg.tau_huber);
  const double initial_cost = ev.cost;

  for (int it = 0; it < cfg.lm_iterations; ++it) {
    const Vec6 delta = (ev.H + lambda * Mat6::Identity()).ldlt().solve(-ev.g);
    const Pose trial = exp_se3(delta) * t_cw;
    const ReprojectionEval trial_ev = eval_reprojection(matches, trial, k, cfg.tau_huber);
    if (trial_ev.cost < ev.cost) {
      t_cw = trial;
      ev = trial_ev;
      lambda = std::max(lambda / 10.0, 1e-9);
    } else {
      lambda = std::min(lambda * 10.0, 1e6);
    }
  }

  SparseResult res;
  res.pose = t_cw.inverse();
  res.twist = log_se3(res.pose);
  const Mat3 R = t_cw.rotation();
  for (int i = 0; i < int(matches.size()); ++i) {
    const Vec3 x = R * matches[i].x_world + t_cw.t;
    if (x.z() <= 0) continue;
    const Vec2 proj(k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy);
    if ((matches[i].pixel - proj).norm() < cfg.tau_inlier) res.inlier_ids.push_back(i);
  }
  res.residual.initial = initial_cost;
  res.residual.final = ev.cost;
  res.residual.count = int(matches.size());
  if (int(res.inlier_ids.size()) < cfg.min_inliers) return std::nullopt;
  return res;
}

bool convergence_check(const std::vector<double>& residuals, double last_step_norm,
                       int association_count, const TrackerConfig& cfg) {
  if (residuals.empty()) return false;
  if (association_count < cfg.assoc_floor) return false;
  if (residuals.back() > residuals.front()) return false;
  return last_step_norm < cfg.tau_step;
}

namespace {

struct DenseEval {
  Mat6 H = Mat6::Zero();
  Vec6 g = Vec6::Zero();
  double cost = 0.0;
  int count = 0;
};

DenseEval eval_dense(const PyramidLevel& frame, const ModelLevel& model,
                     const Pose& model_wc_pose, const Pose& t, const TrackerConfig& cfg,
                     int threads) {
  const int h = frame.k.height, w = frame.k.width;
  const Mat3 R = t.rotation();
  const Mat3 R_mwc = model_wc_pose.rotation();
  const Vec3 t_mwc = model_wc_pose.t;
  const double cos_thresh = std::cos(deg2rad(cfg.assoc_angle_deg));

  const int chunks = std::max(1, std::min(h, 32));
  std::vector<DenseEval> parts(chunks);
  parallel_ranges(0, h, chunks, [&](int c, std::int64_t y0, std::int64_t y1) {
    DenseEval& ev = parts[c];
    for (int y = int(y0); y < int(y1); ++y) {
      for (int x = 0; x < w; ++x) {
        if (!frame.valid.at(x, y)) continue;
        const Vec3 x_w = R * frame.vertex.at(x, y) + t.t;
        const Vec3 x_m = R_mwc * x_w + t_mwc;
        if (x_m.z() <= 1e-6) continue;
        const double iz = 1.0 / x_m.z();
        const double ux = model.k.fx * x_m.x() * iz + model.k.cx;
        const double uy = model.k.fy * x_m.y() * iz + model.k.cy;
        const int ui = int(std::lround(ux)), vi = int(std::lround(uy));
        if (ui < 1 || ui >= model.k.width - 1 || vi < 1 || vi >= model.k.height - 1)
          continue;
        if (!model.valid.at(ui, vi)) continue;
        const Vec3& v_g = model.vertex_w.at(ui, vi);
        const Vec3& n_g = model.normal_w.at(ui, vi);
        if ((v_g - x_w).norm() >= cfg.assoc_dist) continue;
        const Vec3 n_w = R * frame.normal.at(x, y);
        if (n_g.dot(n_w) <= cos_thresh) continue;

        // Point-to-plane term.
        const double r_icp = n_g.dot(x_w - v_g);
        Vec6 j_icp;
        j_icp.head<3>() = n_g;
        j_icp.tail<3>() = -(n_g.cross(x_w));
        ev.H += j_icp * j_icp.transpose();
        ev.g += j_icp * r_icp;
        ev.cost += r_icp * r_icp;

        // Photometric term on the model's intensity.
        const double r_ph = double(model.intensity.at(ui, vi)) - double(frame.intensity.at(x, y));
        const Vec2 grad(model.grad_x.at(ui, vi), model.grad_y.at(ui, vi));
        if (grad.squaredNorm() > 1e-12) {
          Eigen::Matrix<double, 2, 3> dproj;
          dproj << model.k.fx * iz, 0, -model.k.fx * x_m.x() * iz * iz, 0, model.k.fy * iz,
              -model.k.fy * x_m.y() * iz * iz;
          Eigen::Matrix<double, 3, 6> dxw;
          dxw.leftCols<3>() = Mat3::Identity();
          dxw.rightCols<3>() = -skew(x_w);
          const Vec6 j_ph = (grad.transpose() * dproj * R_mwc * dxw).transpose();
          ev.H += cfg.lambda_photo * j_ph * j_ph.transpose();
          ev.g += cfg.lambda_photo * j_ph * r_ph;
        }
        ev.cost += cfg.lambda_photo * r_ph * r_ph;
        ++ev.count;
      }
    }
  }, threads);

  DenseEval total;
  for (const DenseEval& p : parts) {
    total.H += p.H;
    total.g += p.g;
    total.cost += p.cost;
    total.count += p.count;
  }
  return total;
}

}  // namespace

TrackResult dense_align(const ProcessedFrame& frame, const ModelMaps& model,
                        const Pose& model_pose, const Pose& init, const TrackerConfig& cfg,
                        int threads) {
  TrackResult result;
  result.pose = init;
  const Pose model_wc = model_pose.inverse();
  const int levels = std::min(int(model.size()), int(frame.pyramid.size()));

  Pose t = init;
  double lambda = 1e-4;
  std::vector<double> finest_residuals;
  double last_step = 0.0;
  int finest_count = 0;

  for (int l = levels - 1; l >= 0; --l) {
    const PyramidLevel& fl = frame.pyramid[l];
    const ModelLevel& ml = model[l];
    double prev_mean = std::numeric_limits<double>::max();
    Pose best_pose = t;
    for (int it = 0; it < cfg.n_pyr; ++it) {
      const DenseEval ev = eval_dense(fl, ml, model_wc, t, cfg, threads);
      if (ev.count < 6) break;
      const double mean_cost = ev.cost / ev.count;
      if (l == 0) {
        finest_residuals.push_back(mean_cost);
        finest_count = ev.count;
      }
      if (mean_cost <= prev_mean) {
        prev_mean = mean_cost;
        best_pose = t;
        lambda = std::max(lambda / 10.0, 1e-8);
      } else {
        lambda = std::min(lambda * 10.0, 1e4);
        t = best_pose;
      }
      const Vec6 delta = (ev.H + lambda * Mat6::Identity()).ldlt().solve(-ev.g);
      last_step = delta.norm();
      t = exp_se3(delta) * t;
    }
  }

  // Final residual at the returned pose.
  if (!model.empty()) {
    const DenseEval final_ev = eval_dense(frame.pyramid[0], model[0], model_wc, t, cfg, threads);
    finest_count = final_ev.count;
    if (final_ev.count > 0) finest_residuals.push_back(final_ev.cost / final_ev.count);
    result.icp.count = final_ev.count;
    result.icp.final = final_ev.count > 0 ? final_ev.cost / final_ev.count : 0.0;
    result.icp.initial = finest_residuals.empty() ? 0.0 : finest_residuals.front();
  }

  result.last_step_norm = last_step;
  result.accepted = convergence_check(finest_residuals, last_step, finest_count, cfg);
  if (result.accepted) {
    result.pose = t;
  }
  result.twist = log_se3(result.pose);
  return result;
}

bool keyframe_decision(const Pose& pose, const Pose& last_keyframe, double t_k,
                       double theta_k_rad) {
  if (pose.translation_to(last_keyframe) > t_k) return true;
  return pose.rotation_angle_to(last_keyframe) > theta_k_rad;
}

void update_landmarks(const std::vector<Keypoint>& keypoints, const ProcessedFrame& frame,
                      const Pose& pose, int frame_id, LandmarkMap& landmarks,
                      const TrackerConfig& cfg) {
  if (landmarks.capacity <= 0) return;

  // Re-match so observed landmarks refresh and their keypoints don't respawn.
  const CorrespondenceSet matched = match_2d3d(keypoints, landmarks, pose, frame.k, cfg);
  std::vector<std::uint8_t> kp_used(keypoints.size(), 0);
  for (const Correspondence& m : matched) {
    if (m.keypoint_id >= 0) kp_used[m.keypoint_id] = 1;
    if (m.landmark_id >= 0) {
      ++landmarks.landmarks[m.landmark_id].observations;
      landmarks.landmarks[m.landmark_id].last_seen = frame_id;
    }
  }

  for (int i = 0; i < int(keypoints.size()); ++i) {
    if (kp_used[i]) continue;
    const int x = int(std::lround(keypoints[i].px.x()));
    const int y = int(std::lround(keypoints[i].px.y()));
    if (!frame.valid_mask.contains(x, y) || !frame.valid_mask.at(x, y)) continue;
    Landmark lm;
    lm.x_world = pose * frame.vertex_map.at(x, y);
    lm.desc = keypoints[i].desc;
    lm.observations = 1;
    lm.last_seen = frame_id;
    landmarks.landmarks.push_back(lm);
  }

  if (int(landmarks.landmarks.size()) > landmarks.capacity) {
    std::stable_sort(landmarks.landmarks.begin(), landmarks.landmarks.end(),
                     [](const Landmark& a, const Landmark& b) {
                       if (a.last_seen != b.last_seen) return a.last_seen > b.last_seen;
                       return a.observations > b.observations;
                     });
    landmarks.landmarks.resize(landmarks.capacity);
  }
}

}  // namespace sfr
