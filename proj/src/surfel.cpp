#include "sfr/surfel.hpp"

#include "sfr/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace sfr {

Vec3 sh_eval(const ShCoeffs& c, const Vec3& dir, int order) {
  Vec3 rgb = Vec3::Constant(0.5) + kShC0 * c.row(0).transpose();
  if (order >= 1) {
    rgb += kShC1 * (-dir.y() * c.row(1).transpose() + dir.z() * c.row(2).transpose() -
                    dir.x() * c.row(3).transpose());
  }
  return rgb;
}

ShCoeffs sh_from_rgb(const Vec3& rgb) {
  ShCoeffs c = ShCoeffs::Zero();
  c.row(0) = ((rgb - Vec3::Constant(0.5)) / kShC0).transpose();
  return c;
}

std::uint64_t SurfelMap::cell_key(const Vec3& p) const {
  const auto q = [&](double v) {
    return std::uint64_t(std::int64_t(std::floor(v / cell_size_)) & 0x1FFFFF);
  };
  return q(p.x()) | (q(p.y()) << 21) | (q(p.z()) << 42);
}

int SurfelMap::add(const Surfel& s) {
  const int id = int(surfels_.size());
  surfels_.push_back(s);
  anchor_p_.push_back(s.p);
  anchor_n_.push_back(s.normal());
  const std::uint64_t key = cell_key(s.p);
  cell_of_.push_back(key);
  index_[key].push_back(id);
  return id;
}

void SurfelMap::commit(int id) {
  const std::uint64_t key = cell_key(surfels_[id].p);
  if (key == cell_of_[id]) return;
  auto& old_cell = index_[cell_of_[id]];
  old_cell.erase(std::remove(old_cell.begin(), old_cell.end(), id), old_cell.end());
  if (old_cell.empty()) index_.erase(cell_of_[id]);
  index_[key].push_back(id);
  cell_of_[id] = key;
}

void SurfelMap::set_anchor(int id, const Vec3& p_f, const Vec3& n_f) {
  anchor_p_[id] = p_f;
  anchor_n_[id] = n_f;
}

const std::vector<int>* SurfelMap::cell_at(const Vec3& p) const {
  auto it = index_.find(cell_key(p));
  return it == index_.end() ? nullptr : &it->second;
}

std::pair<Vec3, Vec3> SurfelMap::aabb() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  for (const Surfel& s : surfels_) {
    lo = lo.cwiseMin(s.p);
    hi = hi.cwiseMax(s.p);
  }
  return {lo, hi};
}

Vec2 adaptive_scale(double d, const Intrinsics& k, double alpha_s) {
  if (!(d > 0.0)) throw PreconditionError("adaptive_scale: depth must be positive");
  return {alpha_s * d / k.fx, alpha_s * d / k.fy};
}

Quat rotation_from_normal(const Vec3& n) {
  const Vec3 x = any_orthonormal(n);
  const Vec3 y = n.cross(x);
  Mat3 rot;
  rot.col(0) = x;
  rot.col(1) = y;
  rot.col(2) = n;
  Quat q(rot);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return q;
}

std::vector<Surfel> initialize_surfels(const ProcessedFrame& frame, const Pose& pose,
                                       const RenderOutput& render, const MapConfig& cfg,
                                       const NoiseParams& noise) {
  const int w = frame.k.width, h = frame.k.height;
  const Mat3 R = pose.rotation();
  std::vector<Surfel> out;
  for (int y = 0; y < h; y += cfg.init_stride) {
    for (int x = 0; x < w; x += cfg.init_stride) {
      if (!frame.valid_mask.at(x, y)) continue;
      const double d = frame.depth.at(x, y);

      const bool low_opacity = render.alpha_acc.at(x, y) < cfg.tau_o;
      const bool foreground =
          render.valid.at(x, y) && (render.depth.at(x, y) - d > cfg.tau_d);
      if (!low_opacity && !foreground) continue;

      Surfel s;
      s.p = R * frame.vertex_map.at(x, y) + pose.t;
      const Vec3 n_w = R * frame.normal_map.at(x, y);
      s.r = rotation_from_normal(n_w);
      s.s = adaptive_scale(d, frame.k, cfg.alpha_s);
      s.o = cfg.o_init;
      const Rgb8& rgb = frame.raw.color.at(x, y);
      s.c = sh_from_rgb(Vec3(rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0));
      // The first observation is the prior.
      const double lp = 1.0 / sqr(noise.sigma_p(d));
      const double ln = 1.0 / sqr(noise.sigma_n(d));
      s.lambda << lp, lp, lp, ln, ln, ln;
      Vec6 state;
      state << s.p, n_w;
      s.eta = s.lambda.cwiseProduct(state);
      s.created_frame = s.last_observed = frame.frame_id();
      out.push_back(s);
    }
  }
  return out;
}

std::vector<int> select_visible(const SurfelMap& map, const Pose& pose, const Intrinsics& k) {
  const Pose world_to_cam = pose.inverse();
  const Vec3 view_axis = pose.z_axis();
  std::vector<int> out;
  for (int id = 0; id < map.size(); ++id) {
    const Surfel& s = map[id];
    const Vec3 p_cam = world_to_cam * s.p;
    if (p_cam.z() <= 0.0) continue;
    const Vec2 u = project(k, p_cam);
    if (!k.contains(u)) continue;
    if (s.normal().dot(view_axis) >= 0.0) continue;
    out.push_back(id);
  }
  return out;
}

std::vector<int> select_surface(const SurfelMap& map, const std::vector<int>& visible,
                                const RenderOutput& render, const Pose& pose,
                                const Intrinsics& k, double delta_s) {
  const Pose world_to_cam = pose.inverse();
  std::vector<int> out;
  for (int id : visible) {
    const Vec3 p_cam = world_to_cam * map[id].p;
    if (p_cam.z() <= 0.0) continue;
    const Vec2 u = project(k, p_cam);
    if (!k.contains(u)) continue;
    const int ix = int(std::lround(u.x())), iy = int(std::lround(u.y()));
    if (!render.depth.contains(ix, iy)) continue;
    if (std::isinf(delta_s)) {
      out.push_back(id);
      continue;
    }
    if (!render.valid.at(ix, iy)) continue;
    if (std::abs(p_cam.z() - render.depth.at(ix, iy)) < delta_s) out.push_back(id);
  }
  return out;
}

std::vector<Surfel> extract_confident(const SurfelMap& map, double tau_conf) {
  std::vector<Surfel> out;
  for (const Surfel& s : map.surfels())
    if (s.confidence() >= tau_conf) out.push_back(s);
  return out;
}

}  // namespace sfr
