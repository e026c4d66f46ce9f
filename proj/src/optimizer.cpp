#include "sfr/optimizer.hpp"

#include "sfr/parallel.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

namespace sfr {

ImageV3 to_rgb01(const ImageRgb8& img) {
  ImageV3 out(img.width(), img.height());
  for (size_t i = 0; i < img.size(); ++i)
    out[i] = Vec3(img[i][0] / 255.0, img[i][1] / 255.0, img[i][2] / 255.0);
  return out;
}

OptTarget make_target(const ProcessedFrame& frame, const Pose& pose) {
  OptTarget t;
  t.k = frame.k;
  t.pose = pose;
  t.color = to_rgb01(frame.raw.color);
  t.depth = frame.depth;
  t.normal = frame.normal_map;
  t.valid = frame.valid_mask;
  t.frame_id = frame.frame_id();
  return t;
}

namespace {

double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

double loss_photometric(const RenderOutput& render, const ImageV3& target) {
  if (!target.same_size(render.width, render.height))
    throw PreconditionError("loss_photometric: size mismatch");
  double acc = 0.0;
  std::int64_t n = 0;
  for (size_t i = 0; i < target.size(); ++i) {
    if (!render.valid[i]) continue;
    acc += (target[i] - render.color[i]).cwiseAbs().sum();
    ++n;
  }
  if (n == 0) throw DegenerateInput("loss_photometric: no valid pixels");
  return acc / double(3 * n);
}

double loss_depth(const RenderOutput& render, const ImageD& target_depth,
                  const ImageU8& target_valid) {
  if (!target_depth.same_size(render.width, render.height))
    throw PreconditionError("loss_depth: size mismatch");
  double acc = 0.0;
  std::int64_t n = 0;
  for (size_t i = 0; i < target_depth.size(); ++i) {
    if (!render.valid[i] || !target_valid[i]) continue;
    acc += std::abs(target_depth[i] - render.depth[i]);
    ++n;
  }
  if (n == 0) throw DegenerateInput("loss_depth: no valid pixels");
  return acc / double(n);
}

double loss_normal(const RenderOutput& render, const ImageV3& target_normal,
                   const ImageU8& target_valid) {
  if (!target_normal.same_size(render.width, render.height))
    throw PreconditionError("loss_normal: size mismatch");
  double acc = 0.0;
  std::int64_t n = 0;
  for (size_t i = 0; i < target_normal.size(); ++i) {
    if (!render.valid[i] || !target_valid[i]) continue;
    acc += std::abs(1.0 - target_normal[i].dot(render.normal[i]));
    ++n;
  }
  if (n == 0) throw DegenerateInput("loss_normal: no valid pixels");
  return acc / double(n);
}

double loss_reg(const SurfelMap& map, double w_reg_n) {
  if (map.empty()) return 0.0;
  double acc = 0.0;
  for (int id = 0; id < map.size(); ++id) {
    const Surfel& s = map[id];
    acc += (s.p - map.anchor_p(id)).norm();
    acc += w_reg_n * std::abs(1.0 - s.normal().dot(map.anchor_n(id)));
  }
  return acc / map.size();
}

LossTerms total_loss(const RenderOutput& render, const OptTarget& target,
                     const SurfelMap& map, const LossWeights& w) {
  LossTerms t;
  t.color = loss_photometric(render, target.color);
  t.depth = loss_depth(render, target.depth, target.valid);
  t.normal = loss_normal(render, target.normal, target.valid);
  t.reg = loss_reg(map, w.w_reg_n);
  t.total = t.color + w.w_d * t.depth + w.w_n * t.normal + w.w_reg * t.reg;
  return t;
}

void SurfelGrads::init(int n) {
  p.assign(n, Vec3::Zero());
  log_s.assign(n, Vec2::Zero());
  rot.assign(n, Vec3::Zero());
  logit_o.assign(n, 0.0);
  c.assign(n, ShCoeffs::Zero());
}

namespace {

struct GradRec {
  Vec3 p = Vec3::Zero();
  Vec2 log_s = Vec2::Zero();
  Vec3 rot = Vec3::Zero();
  double logit_o = 0.0;
  ShCoeffs c = ShCoeffs::Zero();
};

}  // namespace

SurfelGrads backward(const SurfelMap& map, const RenderOutput& render,
                     const OptTarget& target, const LossWeights& w,
                     const RenderOptions& opts, int sh_order) {
  if (!render.has_contributors)
    throw PreconditionError("backward: render must keep contributor lists");
  const int img_w = render.width, img_h = render.height;
  const Intrinsics& k = target.k;

  // Recreate the per-surfel camera-frame quantities the forward pass used.
  const Pose world_to_cam = target.pose.inverse();
  const Mat3 R_wc = world_to_cam.rotation();
  const int n = map.size();
  struct FpData {
    Vec3 p_cam;
    Mat3 rot_cam;  // columns: axis_u, axis_v, normal
    Vec3 rgb;
    Vec3 view_dir;
    double view_dist;
    bool live = false;
  };
  std::vector<FpData> fp(n);
  parallel_ranges(0, n, std::max(1, std::min(n, 64)),
                  [&](int, std::int64_t lo, std::int64_t hi) {
                    for (int i = int(lo); i < int(hi); ++i) {
                      const Surfel& s = map[i];
                      FpData& f = fp[i];
                      f.p_cam = world_to_cam * s.p;
                      f.rot_cam = R_wc * s.r.toRotationMatrix();
                      const Vec3 off = s.p - target.pose.t;
                      f.view_dist = off.norm();
                      f.view_dir = off / f.view_dist;
                      f.rgb = sh_eval(s.c, f.view_dir, sh_order);
                      f.live = true;
                    }
                  });

  // Loss normalization counts (must match the loss functions exactly).
  std::int64_t n_color = 0, n_depth = 0, n_normal = 0;
  for (size_t i = 0; i < size_t(img_w) * img_h; ++i) {
    if (!render.valid[i]) continue;
    ++n_color;
    if (target.valid[i]) {
      ++n_depth;
      ++n_normal;
    }
  }
  if (n_color == 0) throw DegenerateInput("backward: no valid pixels");

  const int tile = opts.tile_size;
  const int tiles_x = (img_w + tile - 1) / tile;
  const int tiles_y = (img_h + tile - 1) / tile;
  const int num_tiles = tiles_x * tiles_y;
  std::vector<std::unordered_map<int, GradRec>> partials(num_tiles);

  parallel_chunks(num_tiles, [&](int t_idx) {
    const int tx = t_idx % tiles_x, ty = t_idx / tiles_x;
    const int px0 = tx * tile, py0 = ty * tile;
    const int px1 = std::min(img_w, px0 + tile), py1 = std::min(img_h, py0 + tile);
    auto& part = partials[t_idx];

    std::vector<double> T_scratch;
    for (int y = py0; y < py1; ++y) {
      for (int x = px0; x < px1; ++x) {
        const size_t pix = size_t(y) * img_w + x;
        if (!render.valid[pix]) continue;
        const int c0 = render.contrib_offset[pix];
        const int c1 = render.contrib_offset[pix + 1];
        if (c0 == c1) continue;
        const int count = c1 - c0;

        // Forward re-scan from the stored alphas.
        T_scratch.resize(count + 1);
        double depth_blend = 0.0;
        Vec3 normal_sum = Vec3::Zero();
        double T = 1.0;
        for (int i = 0; i < count; ++i) {
          const Contributor& ct = render.contrib[c0 + i];
          T_scratch[i] = T;
          depth_blend += T * ct.alpha * ct.ray_depth;
          normal_sum += T * ct.alpha * fp[ct.surfel_id].rot_cam.col(2);
          T *= (1.0 - ct.alpha);
        }
        T_scratch[count] = T;
        const double W = 1.0 - T;
        const double d_hat = depth_blend / W;
        const double ns_norm = normal_sum.norm();

        // Upstream gradients at this pixel.
        const Vec3 c_err = render.color[pix] - target.color[pix];
        Vec3 g_color(sign_of(c_err.x()), sign_of(c_err.y()), sign_of(c_err.z()));
        g_color /= double(3 * n_color);

        double g_dhat = 0.0;
        Vec3 g_nsum = Vec3::Zero();
        const bool geo_valid = target.valid[pix] != 0;
        if (geo_valid) {
          g_dhat = w.w_d * sign_of(d_hat - target.depth[pix]) / double(n_depth);
          if (ns_norm > 1e-12) {
            const Vec3 n_hat = normal_sum / ns_norm;
            const double gamma = target.normal[pix].dot(n_hat);
            const Vec3 g_nhat = -w.w_n * sign_of(1.0 - gamma) / double(n_normal) *
                                target.normal[pix];
            g_nsum = (g_nhat - n_hat * n_hat.dot(g_nhat)) / ns_norm;
          }
        }
        const double g_W = -g_dhat * d_hat / W;  // from d_hat = blend / W
        const double g_blend = g_dhat / W;

        const Vec3 ray((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);

        // Suffix accumulators over j > i.
        Vec3 suf_c = Vec3::Zero();
        double suf_d = 0.0;
        Vec3 suf_n = Vec3::Zero();
        for (int i = count - 1; i >= 0; --i) {
          const Contributor& ct = render.contrib[c0 + i];
          const FpData& f = fp[ct.surfel_id];
          const Surfel& s = map[ct.surfel_id];
          const double Ti = T_scratch[i];
          const double alpha = ct.alpha;
          const double one_m = 1.0 - alpha;
          const Vec3 n_cam = f.rot_cam.col(2);

          double g_alpha = g_color.dot(Ti * f.rgb - suf_c / one_m);
          g_alpha += g_blend * (Ti * ct.ray_depth - suf_d / one_m);
          g_alpha += g_W * T_scratch[count] / one_m;
          g_alpha += g_nsum.dot(Ti * n_cam - suf_n / one_m);

          const Vec3 g_rgb = g_color * (Ti * alpha);
          const double g_t_blend = g_blend * Ti * alpha;
          const Vec3 g_ncam_blend = g_nsum * (Ti * alpha);

          suf_c += Ti * alpha * f.rgb;
          suf_d += Ti * alpha * ct.ray_depth;
          suf_n += Ti * alpha * n_cam;

          GradRec& g = part[ct.surfel_id];

          // Splat geometry chain. Recompute the intersection.
          const Vec3 axis_u = f.rot_cam.col(0), axis_v = f.rot_cam.col(1);
          const double s0 = s.s.x(), s1 = s.s.y();
          const double denom = n_cam.dot(ray);
          const double t_ray = n_cam.dot(f.p_cam) / denom;
          const Vec3 diff = t_ray * ray - f.p_cam;
          const double a = diff.dot(axis_u) / s0;
          const double b = diff.dot(axis_v) / s1;
          const double G = std::exp(-0.5 * (a * a + b * b));
          const bool clamped = s.o * G >= opts.alpha_clamp;

          const double g_G = clamped ? 0.0 : g_alpha * s.o;
          const double g_o = clamped ? 0.0 : g_alpha * G;
          const double g_a = -a * G * g_G;
          const double g_b = -b * G * g_G;

          // t receives the depth-blend gradient and the in-plane coordinates'.
          const double g_t = g_t_blend + g_a * ray.dot(axis_u) / s0 + g_b * ray.dot(axis_v) / s1;

          Vec3 g_pcam = g_t * n_cam / denom;           // t = n.pc / n.ray
          g_pcam += g_a * (-axis_u / s0) + g_b * (-axis_v / s1);  // diff = t ray - pc

          Vec3 g_ncam = g_t * (f.p_cam - t_ray * ray) / denom;
          g_ncam += g_ncam_blend;

          const Vec3 g_axis_u = g_a * diff / s0;
          const Vec3 g_axis_v = g_b * diff / s1;

          // log-scale: d a / d log s0 = -a, so the chain collapses.
          g.log_s.x() += -g_a * a;
          g.log_s.y() += -g_b * b;

          g.logit_o += g_o * s.o * (1.0 - s.o);

          // Rotation local tangent: d(col_k)/d delta = -R_cam [e_k]x.
          const Vec3 gu = f.rot_cam.transpose() * g_axis_u;
          const Vec3 gv = f.rot_cam.transpose() * g_axis_v;
          const Vec3 gn = f.rot_cam.transpose() * g_ncam;
          g.rot += Vec3::UnitX().cross(gu) + Vec3::UnitY().cross(gv) + Vec3::UnitZ().cross(gn);

          // Position: camera chain plus the SH view-direction chain.
          Vec3 g_pw = R_wc.transpose() * g_pcam;

          // Color / SH.
          g.c.row(0) += kShC0 * g_rgb.transpose();
          if (sh_order >= 1) {
            const Vec3& dir = f.view_dir;
            g.c.row(1) += -kShC1 * dir.y() * g_rgb.transpose();
            g.c.row(2) += kShC1 * dir.z() * g_rgb.transpose();
            g.c.row(3) += -kShC1 * dir.x() * g_rgb.transpose();
            Vec3 g_dir(-kShC1 * s.c.row(3).dot(g_rgb), -kShC1 * s.c.row(1).dot(g_rgb),
                       kShC1 * s.c.row(2).dot(g_rgb));
            g_pw += (g_dir - dir * dir.dot(g_dir)) / f.view_dist;
          }
          g.p += g_pw;
        }
      }
    }
  }, opts.threads);

  SurfelGrads grads;
  grads.init(n);

  // Deterministic reduction in tile order.
  for (int t_idx = 0; t_idx < num_tiles; ++t_idx) {
    for (const auto& [id, g] : partials[t_idx]) {
      grads.p[id] += g.p;
      grads.log_s[id] += g.log_s;
      grads.rot[id] += g.rot;
      grads.logit_o[id] += g.logit_o;
      grads.c[id] += g.c;
    }
  }

  // Geometric regularizer, over all surfels.
  if (w.w_reg > 0.0 && n > 0) {
    const double scale = w.w_reg / double(n);
    for (int id = 0; id < n; ++id) {
      const Surfel& s = map[id];
      const Vec3 dp = s.p - map.anchor_p(id);
      const double dist = dp.norm();
      if (dist > 1e-12) grads.p[id] += scale * dp / dist;
      const Vec3 n_f = map.anchor_n(id);
      const double f_val = 1.0 - s.normal().dot(n_f);
      const Vec3 local = s.r.toRotationMatrix().transpose() * n_f;
      grads.rot[id] += scale * w.w_reg_n * sign_of(f_val) * (-(Vec3::UnitZ().cross(local)));
    }
  }
  return grads;
}

void OptimizerState::ensure(int n) {
  const int old = int(m_p.size());
  if (old >= n) return;
  m_p.resize(n, Vec3::Zero());
  v_p.resize(n, Vec3::Zero());
  m_s.resize(n, Vec2::Zero());
  v_s.resize(n, Vec2::Zero());
  m_r.resize(n, Vec3::Zero());
  v_r.resize(n, Vec3::Zero());
  m_o.resize(n, 0.0);
  v_o.resize(n, 0.0);
  m_c.resize(n, ShCoeffs::Zero());
  v_c.resize(n, ShCoeffs::Zero());
}

namespace {

double logit(double x) {
  const double c = std::clamp(x, 1e-6, 1.0 - 1e-6);
  return std::log(c / (1.0 - c));
}

template <class T>
T adam_step(T& m, T& v, const T& g, double lr, const OptimizerConfig& c, double bc1,
            double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  if constexpr (std::is_same_v<T, double>) {
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    return lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
  } else {
    v = (c.beta2 * v.array() + (1.0 - c.beta2) * g.array().square()).matrix();
    return (lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.eps)).matrix();
  }
}

}  // namespace

OptStats optimize_batch(SurfelMap& map, const KeyframeWindow& window, int m,
                        OptimizerState& state, const LossWeights& w,
                        const OptimizerConfig& cfg, const RenderOptions& ropts,
                        int sh_order, std::uint64_t seed) {
  OptStats stats;
  if (window.empty() || m <= 0 || map.empty()) return stats;
  const int iterations = m * window.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, window.size() - 1);

  RenderOptions opts = ropts;
  opts.keep_contributors = true;

  for (int it = 0; it < iterations; ++it) {
    const OptTarget& target = window[pick(rng)];
    const RenderOutput rendered = render_tiled(map, target.pose, target.k, opts, sh_order);
    LossTerms terms;
    SurfelGrads grads;
    try {
      terms = total_loss(rendered, target, map, w);
      grads = backward(map, rendered, target, w, opts, sh_order);
    } catch (const DegenerateInput&) {
      stats.loss_per_iteration.push_back(0.0);
      continue;  // nothing rendered into this keyframe yet
    }
    stats.loss_per_iteration.push_back(terms.total);

    state.ensure(map.size());
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
    const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);

    for (int id = 0; id < map.size(); ++id) {
      Surfel& s = map.mutate(id);
      s.p -= adam_step(state.m_p[id], state.v_p[id], grads.p[id], cfg.lr_p, cfg, bc1, bc2);

      const Vec2 ds = adam_step(state.m_s[id], state.v_s[id], grads.log_s[id], cfg.lr_s,
                                cfg, bc1, bc2);
      s.s = (s.s.array().log() - ds.array()).exp().matrix();

      const Vec3 dr = adam_step(state.m_r[id], state.v_r[id], grads.rot[id], cfg.lr_r,
                                cfg, bc1, bc2);
      const double angle = dr.norm();
      if (angle > 1e-15) {
        s.r = (s.r * Quat(Eigen::AngleAxisd(-angle, dr / angle))).normalized();
      }

      const double d_o = adam_step(state.m_o[id], state.v_o[id], grads.logit_o[id],
                                   cfg.lr_o, cfg, bc1, bc2);
      const double lo = std::clamp(logit(s.o) - d_o, -12.0, 12.0);
      s.o = 1.0 / (1.0 + std::exp(-lo));

      const ShCoeffs dc = adam_step(state.m_c[id], state.v_c[id], grads.c[id], cfg.lr_c,
                                    cfg, bc1, bc2);
      s.c -= dc;
      map.commit(id);
    }
    ++stats.iterations;
  }
  return stats;
}

}  // namespace sfr
