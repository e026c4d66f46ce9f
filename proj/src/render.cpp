#include "sfr/render.hpp"

#include "sfr/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace sfr {

std::optional<SplatFootprint> project_surfel(const Surfel& surfel, int id,
                                             const Pose& cam_to_world, const Intrinsics& k,
                                             const RenderOptions& opts, int sh_order) {
  if (surfel.normal().dot(cam_to_world.z_axis()) >= 0.0) return std::nullopt;

  const Pose world_to_cam = cam_to_world.inverse();
  SplatFootprint fp;
  fp.surfel_id = id;
  fp.p_cam = world_to_cam * surfel.p;
  if (fp.p_cam.z() <= opts.near_plane) return std::nullopt;

  const Mat3 rot_cam = world_to_cam.rotation() * surfel.r.toRotationMatrix();
  fp.axis_u = rot_cam.col(0);
  fp.axis_v = rot_cam.col(1);
  fp.normal_cam = rot_cam.col(2);
  fp.scale = surfel.s;
  fp.opacity = surfel.o;

  const Vec3 view_dir = (surfel.p - cam_to_world.t).normalized();
  fp.rgb = sh_eval(surfel.c, view_dir, sh_order);
  fp.mean_px = project(k, fp.p_cam);

  // Bounding box of the projected 3-sigma tangent rectangle (contains the
  // projected ellipse).
  const Vec3 du = 3.0 * fp.scale.x() * fp.axis_u;
  const Vec3 dv = 3.0 * fp.scale.y() * fp.axis_v;
  double lo_x = fp.mean_px.x(), hi_x = fp.mean_px.x();
  double lo_y = fp.mean_px.y(), hi_y = fp.mean_px.y();
  for (int sx = -1; sx <= 1; sx += 2) {
    for (int sy = -1; sy <= 1; sy += 2) {
      const Vec3 corner = fp.p_cam + sx * du + sy * dv;
      if (corner.z() <= 1e-6) return std::nullopt;  // grazing the near plane
      const Vec2 u = project(k, corner);
      lo_x = std::min(lo_x, u.x());
      hi_x = std::max(hi_x, u.x());
      lo_y = std::min(lo_y, u.y());
      hi_y = std::max(hi_y, u.y());
    }
  }
  fp.x0 = std::max(0, int(std::floor(lo_x)));
  fp.y0 = std::max(0, int(std::floor(lo_y)));
  fp.x1 = std::min(k.width, int(std::ceil(hi_x)) + 1);
  fp.y1 = std::min(k.height, int(std::ceil(hi_y)) + 1);
  if (fp.x0 >= fp.x1 || fp.y0 >= fp.y1) return std::nullopt;
  return fp;
}

std::pair<double, double> splat_weight(const SplatFootprint& fp, const Vec2& px,
                                       const Intrinsics& k) {
  const Vec3 ray((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0);
  const double denom = fp.normal_cam.dot(ray);
  if (std::abs(denom) < 1e-12) return {0.0, 0.0};
  const double t = fp.normal_cam.dot(fp.p_cam) / denom;
  if (t <= 0.0) return {0.0, 0.0};
  const Vec3 d = t * ray - fp.p_cam;
  const double a = d.dot(fp.axis_u) / fp.scale.x();
  const double b = d.dot(fp.axis_v) / fp.scale.y();
  const double r2 = a * a + b * b;
  if (r2 > 9.0) return {0.0, t};
  return {std::exp(-0.5 * r2), t};
}

namespace {

struct Entry {
  std::int32_t pix;  // tile-local pixel index
  std::int32_t fp;   // footprint index (ascending in surfel id)
  double weight;
  double depth;
};

struct TileResult {
  std::vector<Contributor> contrib;   // concatenated per-pixel runs, scan order
  std::vector<std::int32_t> counts;   // per tile-local pixel
};

}  // namespace

RenderOutput render_core(const SurfelMap& map, const Pose& pose, const Intrinsics& k,
                         const RenderOptions& opts, int tile_size, int threads,
                         int sh_order) {
  const int w = k.width, h = k.height;
  RenderOutput out;
  out.width = w;
  out.height = h;
  out.color = ImageV3(w, h, Vec3::Zero());
  out.depth = ImageD(w, h, 0.0);
  out.normal = ImageV3(w, h, Vec3::Zero());
  out.alpha_acc = ImageD(w, h, 0.0);
  out.valid = ImageU8(w, h, 0);

  // Project all surfels; keep id order.
  const int n = map.size();
  std::vector<SplatFootprint> fps;
  {
    std::vector<std::optional<SplatFootprint>> raw(n);
    parallel_ranges(0, n, std::max(1, std::min(n, 64)),
                    [&](int, std::int64_t lo, std::int64_t hi) {
                      for (int i = int(lo); i < int(hi); ++i)
                        raw[i] = project_surfel(map[i], i, pose, k, opts, sh_order);
                    },
                    threads);
    fps.reserve(n);
    for (auto& f : raw)
      if (f) fps.push_back(*f);
  }

  const int tiles_x = (w + tile_size - 1) / tile_size;
  const int tiles_y = (h + tile_size - 1) / tile_size;
  const int num_tiles = tiles_x * tiles_y;

  // Bin footprints to tiles; per-tile lists stay id-ascending.
  std::vector<std::vector<std::int32_t>> bins(num_tiles);
  for (std::int32_t i = 0; i < std::int32_t(fps.size()); ++i) {
    const SplatFootprint& fp = fps[i];
    const int tx0 = fp.x0 / tile_size, tx1 = (fp.x1 - 1) / tile_size;
    const int ty0 = fp.y0 / tile_size, ty1 = (fp.y1 - 1) / tile_size;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) bins[ty * tiles_x + tx].push_back(i);
  }

  std::vector<TileResult> tile_results(opts.keep_contributors ? num_tiles : 0);

  parallel_chunks(num_tiles, [&](int tile) {
    const int tx = tile % tiles_x, ty = tile / tiles_x;
    const int px0 = tx * tile_size, py0 = ty * tile_size;
    const int px1 = std::min(w, px0 + tile_size), py1 = std::min(h, py0 + tile_size);
    const int tw = px1 - px0;
    const int tile_pixels = tw * (py1 - py0);

    std::vector<Entry> entries;
    for (std::int32_t fi : bins[tile]) {
      const SplatFootprint& fp = fps[fi];
      const int x0 = std::max(fp.x0, px0), x1 = std::min(fp.x1, px1);
      const int y0 = std::max(fp.y0, py0), y1 = std::min(fp.y1, py1);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const auto [wgt, depth] = splat_weight(fp, Vec2(x, y), k);
          if (wgt < opts.min_weight) continue;
          entries.push_back({(y - py0) * tw + (x - px0), fi, wgt, depth});
        }
      }
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.pix != b.pix) return a.pix < b.pix;
      if (a.depth != b.depth) return a.depth < b.depth;
      return a.fp < b.fp;
    });

    TileResult* tr = opts.keep_contributors ? &tile_results[tile] : nullptr;
    if (tr) tr->counts.assign(tile_pixels, 0);

    size_t i = 0;
    while (i < entries.size()) {
      const std::int32_t pix = entries[i].pix;
      size_t j = i;
      while (j < entries.size() && entries[j].pix == pix) ++j;

      const int x = px0 + pix % tw, y = py0 + pix / tw;
      double T = 1.0;
      Vec3 color = Vec3::Zero();
      Vec3 normal_acc = Vec3::Zero();
      double depth_acc = 0.0;
      std::int32_t count = 0;
      for (size_t e = i; e < j; ++e) {
        if (T < opts.termination_T) break;
        const SplatFootprint& fp = fps[entries[e].fp];
        const double alpha = std::min(fp.opacity * entries[e].weight, opts.alpha_clamp);
        color += T * alpha * fp.rgb;
        depth_acc += T * alpha * entries[e].depth;
        normal_acc += T * alpha * fp.normal_cam;
        if (tr) {
          tr->contrib.push_back({fp.surfel_id, alpha, entries[e].depth});
          ++count;
        }
        T *= (1.0 - alpha);
      }
      if (tr) tr->counts[pix] = count;

      const double acc = 1.0 - T;
      out.color.at(x, y) = color;
      out.alpha_acc.at(x, y) = acc;
      if (acc >= opts.eps_px) {
        out.valid.at(x, y) = 1;
        out.depth.at(x, y) = depth_acc / acc;
        const double nn = normal_acc.norm();
        if (nn > 1e-12) out.normal.at(x, y) = normal_acc / nn;
      }
      i = j;
    }
  }, threads);

  if (opts.keep_contributors) {
    out.has_contributors = true;
    out.contrib_offset.assign(size_t(w) * h + 1, 0);
    for (int tile = 0; tile < num_tiles; ++tile) {
      const int tx = tile % tiles_x, ty = tile / tiles_x;
      const int px0 = tx * tile_size, py0 = ty * tile_size;
      const int px1 = std::min(w, px0 + tile_size), py1 = std::min(h, py0 + tile_size);
      const int tw = px1 - px0;
      const auto& counts = tile_results[tile].counts;
      for (int y = py0; y < py1; ++y)
        for (int x = px0; x < px1; ++x)
          out.contrib_offset[size_t(y) * w + x + 1] = counts[(y - py0) * tw + (x - px0)];
    }
    for (size_t i = 1; i < out.contrib_offset.size(); ++i)
      out.contrib_offset[i] += out.contrib_offset[i - 1];
    out.contrib.resize(out.contrib_offset.back());
    parallel_chunks(num_tiles, [&](int tile) {
      const int tx = tile % tiles_x, ty = tile / tiles_x;
      const int px0 = tx * tile_size, py0 = ty * tile_size;
      const int px1 = std::min(w, px0 + tile_size), py1 = std::min(h, py0 + tile_size);
      const int tw = px1 - px0;
      const TileResult& tr = tile_results[tile];
      size_t src = 0;
      for (int y = py0; y < py1; ++y) {
        for (int x = px0; x < px1; ++x) {
          const std::int32_t cnt = tr.counts[(y - py0) * tw + (x - px0)];
          std::copy_n(tr.contrib.begin() + src, cnt,
                      out.contrib.begin() + out.contrib_offset[size_t(y) * w + x]);
          src += cnt;
        }
      }
    }, threads);
  }
  return out;
}

RenderOutput render(const SurfelMap& map, const Pose& pose, const Intrinsics& k,
                    const RenderOptions& opts, int sh_order) {
  return render_core(map, pose, k, opts, std::max(k.width, k.height), 1, sh_order);
}

RenderOutput render_tiled(const SurfelMap& map, const Pose& pose, const Intrinsics& k,
                          const RenderOptions& opts, int sh_order) {
  return render_core(map, pose, k, opts, opts.tile_size, opts.threads, sh_order);
}

}  // namespace sfr
