#include "sfr/frame.hpp"

#include "sfr/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace sfr {

ImageD filter_depth(const ImageD& depth, const BilateralParams& params, int threads) {
  const int w = depth.width(), h = depth.height();
  ImageD out(w, h, 0.0);
  const int r = params.radius;
  const double inv2ss = 1.0 / (2.0 * sqr(params.sigma_spatial));
  const double inv2sr = 1.0 / (2.0 * sqr(params.sigma_range));

  parallel_ranges(0, h, h, [&](int, std::int64_t y0, std::int64_t y1) {
    for (int y = int(y0); y < int(y1); ++y) {
      for (int x = 0; x < w; ++x) {
        const double d0 = depth.at(x, y);
        if (d0 <= 0.0) continue;  // invalid stays invalid, no hole filling
        double acc = 0.0, wsum = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            const double d = depth.at(xx, yy);
            if (d <= 0.0) continue;
            const double wgt = std::exp(-(dx * dx + dy * dy) * inv2ss - sqr(d - d0) * inv2sr);
            acc += wgt * d;
            wsum += wgt;
          }
        }
        out.at(x, y) = acc / wsum;
      }
    }
  }, threads);
  return out;
}

ImageV3 compute_vertex_map(const ImageD& depth, const Intrinsics& k) {
  const int w = depth.width(), h = depth.height();
  ImageV3 vertex(w, h, Vec3::Zero());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = depth.at(x, y);
      if (d > 0.0 && std::isfinite(d)) {
        vertex.at(x, y) = Vec3((x - k.cx) / k.fx * d, (y - k.cy) / k.fy * d, d);
      }
    }
  }
  return vertex;
}

ImageV3 compute_normal_map(const ImageV3& vertex, ImageU8& valid) {
  const int w = vertex.width(), h = vertex.height();
  ImageV3 normal(w, h, Vec3::Zero());
  ImageU8 out_valid(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!valid.at(x, y)) continue;
      if (x == 0 || x == w - 1 || y == 0 || y == h - 1) continue;
      if (!valid.at(x - 1, y) || !valid.at(x + 1, y) || !valid.at(x, y - 1) ||
          !valid.at(x, y + 1))
        continue;
      const Vec3 dx = vertex.at(x + 1, y) - vertex.at(x - 1, y);
      const Vec3 dy = vertex.at(x, y + 1) - vertex.at(x, y - 1);
      Vec3 n = dx.cross(dy);
      const double len = n.norm();
      if (len < 1e-12) continue;
      n /= len;
      if (n.dot(vertex.at(x, y)) > 0.0) n = -n;  // orient toward the camera
      normal.at(x, y) = n;
      out_valid.at(x, y) = 1;
    }
  }
  valid = out_valid;
  return normal;
}

ImageF intensity_of(const ImageRgb8& color) {
  ImageF out(color.width(), color.height());
  for (size_t i = 0; i < color.size(); ++i) {
    const Rgb8& c = color[i];
    out[i] = float((0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]) / 255.0);
  }
  return out;
}

namespace {

// Lower median of the valid entries of a 2x2 block; never blends across
// depth edges.
double block_median_depth(const ImageD& d, int x0, int y0) {
  double v[4];
  int n = 0;
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx) {
      const int x = x0 + dx, y = y0 + dy;
      if (x < d.width() && y < d.height() && d.at(x, y) > 0.0) v[n++] = d.at(x, y);
    }
  if (n == 0) return 0.0;
  std::sort(v, v + n);
  return v[(n - 1) / 2];
}

}  // namespace

std::vector<PyramidLevel> build_pyramid(const ProcessedFrame& frame, int levels) {
  if (levels < 1) throw PreconditionError("build_pyramid: levels must be >= 1");
  const int min_dim = std::min(frame.k.width, frame.k.height);
  if ((min_dim >> (levels - 1)) < 2)
    throw PreconditionError("build_pyramid: too many levels for the image size");

  std::vector<PyramidLevel> pyr(levels);
  pyr[0].k = frame.k;
  pyr[0].intensity = frame.intensity;
  pyr[0].depth = frame.depth;
  pyr[0].vertex = frame.vertex_map;
  pyr[0].normal = frame.normal_map;
  pyr[0].valid = frame.valid_mask;

  for (int l = 1; l < levels; ++l) {
    const PyramidLevel& prev = pyr[l - 1];
    PyramidLevel& cur = pyr[l];
    cur.k = frame.k.level(l);
    const int w = cur.k.width, h = cur.k.height;
    cur.intensity = ImageF(w, h, 0.f);
    cur.depth = ImageD(w, h, 0.0);
    ImageU8 depth_valid(w, h, 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float s = 0.f;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int px = 2 * x + dx, py = 2 * y + dy;
            if (px < prev.k.width && py < prev.k.height) {
              s += prev.intensity.at(px, py);
              ++n;
            }
          }
        cur.intensity.at(x, y) = s / float(n);
        const double d = block_median_depth(prev.depth, 2 * x, 2 * y);
        if (d > 0.0) {
          cur.depth.at(x, y) = d;
          depth_valid.at(x, y) = 1;
        }
      }
    }
    cur.vertex = compute_vertex_map(cur.depth, cur.k);
    cur.valid = depth_valid;
    cur.normal = compute_normal_map(cur.vertex, cur.valid);
  }
  return pyr;
}

ProcessedFrame process_frame(RawFrame raw, const Intrinsics& k, int pyramid_levels,
                             bool bilateral, int threads) {
  ProcessedFrame f;
  f.k = k;
  f.intensity = intensity_of(raw.color);
  f.depth = bilateral ? filter_depth(raw.depth, {}, threads) : raw.depth;
  f.raw = std::move(raw);
  f.vertex_map = compute_vertex_map(f.depth, k);
  f.valid_mask = ImageU8(f.depth.width(), f.depth.height(), 0);
  for (size_t i = 0; i < f.depth.size(); ++i)
    f.valid_mask[i] = (f.depth[i] > 0.0 && std::isfinite(f.depth[i])) ? 1 : 0;
  f.normal_map = compute_normal_map(f.vertex_map, f.valid_mask);
  f.pyramid = build_pyramid(f, pyramid_levels);
  return f;
}

std::pair<ImageV3, ImageV3> transform_to_world(const ProcessedFrame& frame, const Pose& pose) {
  const int w = frame.vertex_map.width(), h = frame.vertex_map.height();
  ImageV3 v_w(w, h, Vec3::Zero()), n_w(w, h, Vec3::Zero());
  const Mat3 R = pose.rotation();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!frame.valid_mask.at(x, y)) continue;
      v_w.at(x, y) = R * frame.vertex_map.at(x, y) + pose.t;
      n_w.at(x, y) = R * frame.normal_map.at(x, y);
    }
  }
  return {std::move(v_w), std::move(n_w)};
}

}  // namespace sfr
