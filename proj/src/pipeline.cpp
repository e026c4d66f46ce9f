#include "sfr/pipeline.hpp"

#include "sfr/exports.hpp"
#include "sfr/fusion.hpp"
#include "sfr/png_io.hpp"
#include "sfr/render.hpp"
#include "sfr/tracking.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace sfr {

namespace fs = std::filesystem;

namespace {

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

FrameSource source_from_dataset(const DatasetHandle& ds) {
  FrameSource src;
  src.intrinsics = ds.intrinsics;
  src.count = int(ds.size());
  src.load = [&ds](int i) { return load_frame(ds, i); };
  return src;
}

Pipeline::Pipeline(const Config& cfg, const Intrinsics& k)
    : cfg_(cfg), k_(k), map_(cfg.map.cell_size), window_(cfg.optimizer.n_batch) {
  cfg_.validate();
  k_.validate();
  landmarks_.capacity = 20000;
}

Pose Pipeline::process(RawFrame raw) {
  const auto t_total = std::chrono::steady_clock::now();
  FrameTiming ft;
  ft.frame_id = raw.frame_id;
  const int threads = cfg_.run.threads;
  const double timestamp = raw.timestamp;
  const int frame_id = raw.frame_id;

  auto t0 = std::chrono::steady_clock::now();
  const ProcessedFrame frame = process_frame(std::move(raw), k_, cfg_.tracker.l_pyr,
                                             cfg_.run.bilateral_filter, threads);
  ft.preprocess_ms = ms_since(t0);

  RenderOptions ropts = cfg_.render;
  ropts.threads = threads;

  // Constant-velocity prediction.
  Pose predicted = last_pose_;
  if (has_prev_) predicted = last_pose_ * (prev_pose_.inverse() * last_pose_);

  Pose pose = predicted;
  if (has_pose_ && !map_.empty()) {
    // Model maps rendered once at the predicted pose.
    t0 = std::chrono::steady_clock::now();
    const RenderOutput model_render = render_tiled(map_, predicted, k_, ropts,
                                                   cfg_.map.sh_order);
    const ModelMaps model = build_model_maps(model_render, predicted, k_, cfg_.tracker.l_pyr);
    ft.render_ms = ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    const std::vector<Keypoint> keypoints =
        detect_and_describe(frame.intensity, cfg_.tracker.features);
    const CorrespondenceSet matches =
        match_2d3d(keypoints, landmarks_, predicted, k_, cfg_.tracker);
    const auto sparse = sparse_pose_init(matches, predicted, k_, cfg_.tracker);
    Pose dense_init = sparse ? sparse->pose : predicted;
    ft.sparse_ms = ms_since(t0);

    t0 = std::chrono::steady_clock::now();
    const TrackResult dense =
        dense_align(frame, model, predicted, dense_init, cfg_.tracker, threads);
    ft.dense_ms = ms_since(t0);
    pose = dense.accepted ? dense.pose : dense_init;
  }

  // Fusion + initialization work off a render at the final pose.
  t0 = std::chrono::steady_clock::now();
  const RenderOutput view = render_tiled(map_, pose, k_, ropts, cfg_.map.sh_order);
  ft.render_ms += ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  FusionConfig fusion_cfg;
  fusion_cfg.delta_s = cfg_.map.delta_s;
  const FusionStats fstats = fuse_frame(map_, frame, pose, view, cfg_.noise, fusion_cfg,
                                        threads);
  fused_total_ += fstats.fused;
  ft.fusion_ms = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  const std::vector<Surfel> born = initialize_surfels(frame, pose, view, cfg_.map, cfg_.noise);
  for (const Surfel& s : born) map_.add(s);
  ft.init_ms = ms_since(t0);

  const bool is_keyframe =
      !has_keyframe_ ||
      keyframe_decision(pose, last_keyframe_pose_, cfg_.tracker.t_k,
                        deg2rad(cfg_.tracker.theta_k_deg));
  if (is_keyframe) {
    last_keyframe_pose_ = pose;
    has_keyframe_ = true;
    keyframes_.push_back({timestamp, pose});
    window_.push(make_target(frame, pose));

    const std::vector<Keypoint> kf_keypoints =
        detect_and_describe(frame.intensity, cfg_.tracker.features);
    update_landmarks(kf_keypoints, frame, pose, frame_id, landmarks_, cfg_.tracker);

    if (++keyframes_since_opt_ >= cfg_.run.optimize_every_keyframes) {
      keyframes_since_opt_ = 0;
      t0 = std::chrono::steady_clock::now();
      optimize_batch(map_, window_, cfg_.optimizer.m, opt_state_, cfg_.loss, cfg_.optimizer,
                     ropts, cfg_.map.sh_order, cfg_.run.seed + std::uint64_t(frame_id));
      ft.optimize_ms = ms_since(t0);
    }
  }

  prev_pose_ = last_pose_;
  has_prev_ = has_pose_;
  last_pose_ = pose;
  has_pose_ = true;
  trajectory_.push_back({timestamp, pose});
  ft.total_ms = ms_since(t_total);
  timing_.push_back(ft);
  return pose;
}

namespace {

// Bounded single-producer queue so frame decode and preprocessing overlap the
// tracking/mapping work without affecting results.
class FrameQueue {
 public:
  explicit FrameQueue(int capacity) : capacity_(capacity) {}

  void push(RawFrame f) {
    std::unique_lock lk(mu_);
    cv_pop_.wait(lk, [&] { return int(q_.size()) < capacity_; });
    q_.push_back(std::move(f));
    cv_push_.notify_one();
  }
  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    cv_push_.notify_all();
  }
  bool pop(RawFrame& out) {
    std::unique_lock lk(mu_);
    cv_push_.wait(lk, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return false;
    out = std::move(q_.front());
    q_.pop_front();
    cv_pop_.notify_one();
    return true;
  }

 private:
  int capacity_;
  std::deque<RawFrame> q_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable cv_push_, cv_pop_;
};

}  // namespace

RunResult run_pipeline(const FrameSource& source, const Config& cfg,
                       const std::string& out_dir, bool verbose) {
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/renders");

  Pipeline pipeline(cfg, source.intrinsics);

  const auto t_start = std::chrono::steady_clock::now();
  FrameQueue queue(std::max(2, cfg.optimizer.n_batch));
  std::thread loader([&] {
    for (int i = 0; i < source.count; ++i) queue.push(source.load(i));
    queue.close();
  });

  RawFrame raw;
  int done = 0;
  while (queue.pop(raw)) {
    pipeline.process(std::move(raw));
    ++done;
    if (verbose && done % 20 == 0)
      std::cerr << "frame " << done << "/" << source.count << ", surfels "
                << pipeline.map().size() << "\n";
  }
  loader.join();

  RunResult result;
  result.trajectory = pipeline.trajectory();
  result.keyframes = pipeline.keyframes();
  result.timing = pipeline.timing();
  result.surfel_count = pipeline.map().size();
  result.fused_total = pipeline.fused_total();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  result.fps = seconds > 0 ? done / seconds : 0.0;

  save_trajectory(result.trajectory, out_dir + "/trajectory.txt");
  save_trajectory(result.keyframes, out_dir + "/keyframes.txt");
  export_surfels_ply(pipeline.map(), out_dir + "/surfels.ply", cfg.run.tau_conf);
  save_config(cfg, out_dir + "/config.cfg");

  {
    std::ofstream csv(out_dir + "/timing.csv");
    csv << "frame,preprocess_ms,sparse_ms,dense_ms,render_ms,fusion_ms,init_ms,"
           "optimize_ms,total_ms\n";
    csv << std::fixed << std::setprecision(3);
    for (const FrameTiming& t : result.timing) {
      csv << t.frame_id << "," << t.preprocess_ms << "," << t.sparse_ms << "," << t.dense_ms
          << "," << t.render_ms << "," << t.fusion_ms << "," << t.init_ms << ","
          << t.optimize_ms << "," << t.total_ms << "\n";
    }
  }

  // Final-map renders at the keyframe poses, for photometric evaluation.
  RenderOptions ropts = cfg.render;
  ropts.threads = cfg.run.threads;
  for (const TimedPose& kf : result.keyframes) {
    const RenderOutput r = render_tiled(pipeline.map(), kf.pose, source.intrinsics, ropts,
                                        cfg.map.sh_order);
    std::ostringstream name;
    name << out_dir << "/renders/kf_" << std::fixed << std::setprecision(6) << kf.timestamp
         << ".png";
    write_png_rgb8(name.str(), render_to_rgb8(r));
  }
  return result;
}

}  // namespace sfr
