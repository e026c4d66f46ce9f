#include "sfr/config.hpp"
#include "sfr/dataset.hpp"
#include "sfr/exports.hpp"
#include "sfr/metrics.hpp"
#include "sfr/optimizer.hpp"
#include "sfr/pipeline.hpp"
#include "sfr/png_io.hpp"
#include "sfr/render.hpp"
#include "sfr/scene.hpp"
#include "sfr/tsdf.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace sfr;

namespace {

Config make_config(const std::string& config_path, const std::vector<std::string>& overrides,
                   std::uint64_t seed, int threads) {
  Config cfg = config_path.empty() ? Config{} : load_config(config_path);
  for (const std::string& o : overrides) apply_override(cfg, o);
  if (seed != 0) cfg.run.seed = seed;
  if (threads > 0) cfg.run.threads = threads;
  cfg.validate();
  return cfg;
}

int cmd_synth(const std::string& spec_name, const std::string& out, int width, int height,
              std::uint64_t seed) {
  const SceneSpec spec = make_scene(spec_name, width, height);
  TumWriter writer(out, spec.k);
  for (int i = 0; i < spec.trajectory.frames; ++i) {
    auto [frame, pose] = render_ground_truth(spec, i);
    writer.add(corrupt(frame, spec.noise, seed + std::uint64_t(i)), pose);
  }
  writer.finalize();
  export_mesh_ply(ground_truth_mesh(spec), out + "/gt_mesh.ply");
  std::cout << "wrote " << spec.trajectory.frames << " frames to " << out << "\n";
  return 0;
}

int cmd_run(const std::string& dataset, const std::string& out, const Config& cfg,
            bool quiet) {
  const DatasetHandle ds = load_tum(dataset);
  const FrameSource src = source_from_dataset(ds);
  const RunResult res = run_pipeline(src, cfg, out, !quiet);
  std::cout << "frames " << res.trajectory.size() << "\n"
            << "keyframes " << res.keyframes.size() << "\n"
            << "surfels " << res.surfel_count << "\n"
            << "fps " << res.fps << "\n";
  return 0;
}

int cmd_mesh(const std::string& run_dir, const std::string& out_path, const Config& cfg) {
  SurfelMap map = load_surfels_ply(run_dir + "/surfels.ply", cfg.map.cell_size);
  const Trajectory keyframes = load_trajectory(run_dir + "/keyframes.txt");
  if (map.empty() || keyframes.empty())
    throw IoError("mesh: run directory has no surfels or keyframes");

  Config run_cfg = cfg;
  if (fs::exists(run_dir + "/config.cfg")) run_cfg = load_config(run_dir + "/config.cfg");

  Intrinsics k = default_tum_intrinsics();
  // The run's dataset intrinsics are echoed next to the surfels when present.
  if (fs::exists(run_dir + "/intrinsics.txt")) {
    std::ifstream in(run_dir + "/intrinsics.txt");
    in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale;
  }

  const VoxelLattice lattice = lattice_for_map(map, run_cfg.meshing.voxel_size);
  const OccupancyGrid occ = build_occupancy(map, lattice, run_cfg.meshing.dilation_r);
  TsdfVolume vol(lattice, run_cfg.meshing.truncation);

  RenderOptions ropts = run_cfg.render;
  ropts.threads = run_cfg.run.threads;
  for (const TimedPose& kf : keyframes) {
    const RenderOutput r = render_tiled(map, kf.pose, k, ropts, 0);
    integrate_depth(vol, r.depth, kf.pose, k, &occ, run_cfg.run.threads);
  }
  const TriangleMesh mesh = marching_cubes(vol);
  const std::string path = out_path.empty() ? run_dir + "/mesh.ply" : out_path;
  export_mesh_ply(mesh, path);
  if (path.size() > 4)
    export_mesh_obj(mesh, path.substr(0, path.size() - 4) + ".obj");
  std::cout << "mesh vertices " << mesh.vertices.size() << " faces " << mesh.faces.size()
            << " -> " << path << "\n";
  return 0;
}

int cmd_render(const std::string& run_dir, const std::string& pose_spec, int frame_index,
               const std::string& out_path, const Config& cfg) {
  const SurfelMap map = load_surfels_ply(run_dir + "/surfels.ply", cfg.map.cell_size);
  const Trajectory traj = load_trajectory(run_dir + "/trajectory.txt");
  Intrinsics k = default_tum_intrinsics();
  if (fs::exists(run_dir + "/intrinsics.txt")) {
    std::ifstream in(run_dir + "/intrinsics.txt");
    in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale;
  }

  Pose pose;
  if (!pose_spec.empty()) {
    std::istringstream is(pose_spec);
    double qx, qy, qz, qw;
    if (!(is >> pose.t.x() >> pose.t.y() >> pose.t.z() >> qx >> qy >> qz >> qw))
      throw IoError("render: --pose expects 'tx ty tz qx qy qz qw'");
    pose.q = Quat(qw, qx, qy, qz).normalized();
  } else {
    if (frame_index < 0 || frame_index >= int(traj.size()))
      throw IoError("render: --frame out of range");
    pose = traj[frame_index].pose;
  }

  RenderOptions ropts = cfg.render;
  ropts.threads = cfg.run.threads;
  const RenderOutput r = render_tiled(map, pose, k, ropts, 0);
  const std::string path = out_path.empty() ? run_dir + "/render.png" : out_path;
  write_png_rgb8(path, render_to_rgb8(r));
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& gt_traj_path,
             const std::string& gt_mesh_path, const std::string& dataset,
             const Config& cfg) {
  std::ostringstream report;
  report << std::fixed << std::setprecision(4);

  const Trajectory est = load_trajectory(run_dir + "/trajectory.txt");

  if (!gt_traj_path.empty()) {
    const Trajectory gt = load_trajectory(gt_traj_path);
    report << "ate_rmse_cm = " << ate_rmse_cm(est, gt) << "\n";
  }

  if (!gt_mesh_path.empty()) {
    const SurfelMap map = load_surfels_ply(run_dir + "/surfels.ply", cfg.map.cell_size);
    const TriangleMesh gt_mesh = load_mesh_ply(gt_mesh_path);
    const std::vector<Vec3> pts =
        sample_surfel_points(map, cfg.run.eval_sample_points, cfg.run.seed);
    const ReconReport rec = recon_metrics(pts, gt_mesh);
    report << "accuracy_cm = " << rec.accuracy_cm << "\n"
           << "accuracy_ratio_pct = " << rec.accuracy_ratio_pct << "\n"
           << "completeness_cm = " << rec.completeness_cm << "\n"
           << "completeness_ratio_pct = " << rec.completeness_ratio_pct << "\n";
  }

  if (!dataset.empty()) {
    // Photometric quality of the saved keyframe renders against the dataset.
    const DatasetHandle ds = load_tum(dataset);
    const Trajectory keyframes = load_trajectory(run_dir + "/keyframes.txt");
    double psnr_sum = 0, ssim_sum = 0;
    int n = 0;
    for (const TimedPose& kf : keyframes) {
      std::ostringstream name;
      name << run_dir << "/renders/kf_" << std::fixed << std::setprecision(6)
           << kf.timestamp << ".png";
      if (!fs::exists(name.str())) continue;
      int best = -1;
      double best_dt = 0.02;
      for (int i = 0; i < int(ds.size()); ++i) {
        const double dt = std::abs(ds.frames[i].timestamp - kf.timestamp);
        if (dt <= best_dt) {
          best_dt = dt;
          best = i;
        }
      }
      if (best < 0) continue;
      const ImageV3 rendered = to_rgb01(read_png_rgb8(name.str()));
      const ImageV3 observed = to_rgb01(read_png_rgb8(ds.frames[best].color_path));
      const double p = psnr(rendered, observed);
      if (std::isfinite(p)) psnr_sum += p; else psnr_sum += 99.0;
      ssim_sum += ssim(rendered, observed);
      ++n;
    }
    if (n > 0) {
      report << "psnr_db = " << psnr_sum / n << "\n"
             << "ssim = " << ssim_sum / n << "\n"
             << "eval_views = " << n << "\n";
    }
  }

  std::cout << report.str();
  std::ofstream out(run_dir + "/eval.txt");
  out << report.str();

  std::ofstream csv(run_dir + "/eval.csv");
  csv << "metric,value\n";
  std::istringstream lines(report.str());
  std::string line;
  while (std::getline(lines, line)) {
    const size_t eq = line.find(" = ");
    if (eq != std::string::npos)
      csv << line.substr(0, eq) << "," << line.substr(eq + 3) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-surfel RGB-D reconstruction"};
  app.require_subcommand(1);

  std::string config_path, out, dataset, spec_name, run_dir, pose_spec;
  std::string gt_traj, gt_mesh;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int threads = 0, width = 320, height = 240, frame_index = -1;
  bool quiet = false;

  app.add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override, e.g. fusion.kappa_p=0.001");
  app.add_option("--seed", seed, "RNG seed (nonzero overrides config)");
  app.add_option("--threads", threads, "worker threads");

  auto* synth = app.add_subcommand("synth", "generate a synthetic TUM-layout dataset");
  synth->add_option("spec", spec_name, "scene spec: plane-box | room | two-stage")
      ->required();
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--width", width);
  synth->add_option("--height", height);

  auto* run = app.add_subcommand("run", "run the full pipeline on a dataset");
  run->add_option("dataset", dataset, "TUM-layout dataset directory")->required();
  run->add_option("--out", out, "output directory")->required();
  run->add_flag("--quiet", quiet);

  auto* mesh = app.add_subcommand("mesh", "voxel-masked TSDF mesh from a run directory");
  mesh->add_option("run_dir", run_dir)->required();
  mesh->add_option("--out", out);

  auto* render = app.add_subcommand("render", "render a novel view from a run directory");
  render->add_option("run_dir", run_dir)->required();
  render->add_option("--pose", pose_spec, "'tx ty tz qx qy qz qw'");
  render->add_option("--frame", frame_index, "trajectory index");
  render->add_option("--out", out);

  auto* eval = app.add_subcommand("eval", "trajectory / reconstruction / photometric report");
  eval->add_option("run_dir", run_dir)->required();
  eval->add_option("--gt-traj", gt_traj)->check(CLI::ExistingFile);
  eval->add_option("--gt-mesh", gt_mesh)->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset);

  CLI11_PARSE(app, argc, argv);

  try {
    const Config cfg = make_config(config_path, overrides, seed, threads);
    if (synth->parsed()) return cmd_synth(spec_name, out, width, height, cfg.run.seed);
    if (run->parsed()) return cmd_run(dataset, out, cfg, quiet);
    if (mesh->parsed()) return cmd_mesh(run_dir, out, cfg);
    if (render->parsed()) return cmd_render(run_dir, pose_spec, frame_index, out, cfg);
    if (eval->parsed()) return cmd_eval(run_dir, gt_traj, gt_mesh, dataset, cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
