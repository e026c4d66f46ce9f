#include "sfr/dataset.hpp"

#include "sfr/png_io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace sfr {

namespace fs = std::filesystem;

namespace {

constexpr double kAssocTol = 0.02;  // seconds

std::vector<std::pair<double, std::string>> read_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("dataset: missing index file " + path);
  std::vector<std::pair<double, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    double ts;
    std::string p;
    if (is >> ts >> p) out.push_back({ts, p});
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Calibration sidecar: fx fy cx cy width height depth_scale on one line.
std::optional<Intrinsics> read_intrinsics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height >> k.depth_scale))
    throw IoError("dataset: malformed intrinsics file " + path);
  return k;
}

}  // namespace

Intrinsics default_tum_intrinsics() {
  Intrinsics k;
  k.fx = 525.0;
  k.fy = 525.0;
  k.cx = 319.5;
  k.cy = 239.5;
  k.width = 640;
  k.height = 480;
  k.depth_scale = 5000.0;
  return k;
}

DatasetHandle load_tum(const std::string& root) {
  DatasetHandle ds;
  ds.root = root;
  const auto rgb = read_index(root + "/rgb.txt");
  const auto depth = read_index(root + "/depth.txt");

  size_t j = 0;
  for (const auto& [ts, color_path] : rgb) {
    while (j + 1 < depth.size() &&
           std::abs(depth[j + 1].first - ts) <= std::abs(depth[j].first - ts))
      ++j;
    if (j < depth.size() && std::abs(depth[j].first - ts) <= kAssocTol) {
      ds.frames.push_back({ts, root + "/" + color_path, root + "/" + depth[j].second});
    } else {
      ++ds.dropped_associations;
    }
  }
  if (ds.frames.empty()) throw IoError("dataset: no rgb/depth associations in " + root);

  if (auto k = read_intrinsics_file(root + "/intrinsics.txt")) {
    ds.intrinsics = *k;
  } else {
    ds.intrinsics = default_tum_intrinsics();
    // Fall back to the size of the first color image.
    const ImageRgb8 first = read_png_rgb8(ds.frames[0].color_path);
    if (first.width() != ds.intrinsics.width || first.height() != ds.intrinsics.height) {
      const double sx = double(first.width()) / ds.intrinsics.width;
      ds.intrinsics.fx *= sx;
      ds.intrinsics.fy *= sx;
      ds.intrinsics.cx = (first.width() - 1) / 2.0;
      ds.intrinsics.cy = (first.height() - 1) / 2.0;
      ds.intrinsics.width = first.width();
      ds.intrinsics.height = first.height();
    }
  }

  if (fs::exists(root + "/groundtruth.txt"))
    ds.ground_truth = load_trajectory(root + "/groundtruth.txt");
  return ds;
}

RawFrame load_frame(const DatasetHandle& ds, int index) {
  const auto& a = ds.frames.at(index);
  RawFrame f;
  f.color = read_png_rgb8(a.color_path);
  f.depth = read_png_depth16(a.depth_path, ds.intrinsics.depth_scale);
  f.timestamp = a.timestamp;
  f.frame_id = index;
  return f;
}

TumWriter::TumWriter(const std::string& root_, const Intrinsics& k_) : root(root_), k(k_) {
  fs::create_directories(root + "/rgb");
  fs::create_directories(root + "/depth");
}

void TumWriter::add(const RawFrame& frame, const Pose& gt_pose) {
  std::ostringstream ts;
  ts << std::fixed << std::setprecision(6) << frame.timestamp;
  const std::string name = ts.str() + ".png";
  write_png_rgb8(root + "/rgb/" + name, frame.color);
  write_png_depth16(root + "/depth/" + name, frame.depth, k.depth_scale);
  rgb_lines.push_back(ts.str() + " rgb/" + name);
  depth_lines.push_back(ts.str() + " depth/" + name);
  std::ostringstream gt;
  gt << std::fixed << std::setprecision(6) << frame.timestamp << " " << gt_pose.t.x() << " "
     << gt_pose.t.y() << " " << gt_pose.t.z() << " " << gt_pose.q.x() << " " << gt_pose.q.y()
     << " " << gt_pose.q.z() << " " << gt_pose.q.w();
  gt_lines.push_back(gt.str());
}

void TumWriter::finalize() {
  const auto dump = [&](const std::string& name, const std::vector<std::string>& lines,
                        const std::string& header) {
    std::ofstream out(root + "/" + name);
    if (!out) throw IoError("dataset: cannot write " + root + "/" + name);
    out << "# " << header << "\n";
    for (const auto& l : lines) out << l << "\n";
  };
  dump("rgb.txt", rgb_lines, "timestamp filename");
  dump("depth.txt", depth_lines, "timestamp filename");
  dump("groundtruth.txt", gt_lines, "timestamp tx ty tz qx qy qz qw");
  std::ofstream cal(root + "/intrinsics.txt");
  cal << std::setprecision(17) << k.fx << " " << k.fy << " " << k.cx << " " << k.cy << " "
      << k.width << " " << k.height << " " << k.depth_scale << "\n";
}

Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("trajectory: cannot open " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    TimedPose tp;
    double qx, qy, qz, qw;
    if (is >> tp.timestamp >> tp.pose.t.x() >> tp.pose.t.y() >> tp.pose.t.z() >> qx >> qy >>
        qz >> qw) {
      tp.pose.q = Quat(qw, qx, qy, qz).normalized();
      traj.push_back(tp);
    }
  }
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("trajectory: cannot write " + path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  out << std::setprecision(9) << std::fixed;
  for (const TimedPose& tp : traj) {
    out << tp.timestamp << " " << tp.pose.t.x() << " " << tp.pose.t.y() << " "
        << tp.pose.t.z() << " " << tp.pose.q.x() << " " << tp.pose.q.y() << " "
        << tp.pose.q.z() << " " << tp.pose.q.w() << "\n";
  }
}

}  // namespace sfr
