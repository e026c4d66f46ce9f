#include "sfr/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sfr {

namespace {

constexpr int kCircle[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},
                                {2, 2},  {1, 3},  {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

// Fixed BRIEF-style sampling pattern, gaussian-distributed pairs in a
// radius-13 patch.
struct Pattern {
  std::array<std::array<std::int8_t, 4>, 256> pairs;
  Pattern() {
    std::mt19937 rng(20240117u);
    std::normal_distribution<double> g(0.0, 5.5);
    for (auto& p : pairs) {
      for (int i = 0; i < 4; ++i) {
        double v;
        do {
          v = g(rng);
        } while (std::abs(v) > 12.0);
        p[i] = std::int8_t(std::lround(v));
      }
    }
  }
};

const Pattern& pattern() {
  static const Pattern p;
  return p;
}

ImageF box_blur(const ImageF& img) {
  const int w = img.width(), h = img.height();
  ImageF tmp(w, h, 0.f), out(w, h, 0.f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -2; i <= 2; ++i) acc += img.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc / 5.f;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      for (int i = -2; i <= 2; ++i) acc += tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc / 5.f;
    }
  return out;
}

double fast_score(const ImageF& img, int x, int y, double t) {
  const double c = img.at(x, y);
  // Contiguous arc test, 9 of 16.
  unsigned brighter = 0, darker = 0;
  for (int i = 0; i < 16; ++i) {
    const double v = img.at(x + kCircle[i][0], y + kCircle[i][1]);
    if (v > c + t) brighter |= (1u << i);
    if (v < c - t) darker |= (1u << i);
  }
  const auto has_arc = [](unsigned bits) {
    const unsigned wrap = bits | (bits << 16);
    int run = 0;
    for (int i = 0; i < 32; ++i) {
      run = (wrap >> i) & 1 ? run + 1 : 0;
      if (run >= 9) return true;
    }
    return false;
  };
  if (!has_arc(brighter) && !has_arc(darker)) return 0.0;
  double score = 0.0;
  for (int i = 0; i < 16; ++i) {
    const double v = img.at(x + kCircle[i][0], y + kCircle[i][1]);
    score += std::max(0.0, std::abs(v - c) - t);
  }
  return score;
}

}  // namespace

std::vector<Keypoint> detect_and_describe(const ImageF& intensity, const FeatureConfig& cfg) {
  const int w = intensity.width(), h = intensity.height();
  const int border = std::max(cfg.border, 4);
  if (w <= 2 * border || h <= 2 * border) return {};

  ImageF score(w, h, 0.f);
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x)
      score.at(x, y) = float(fast_score(intensity, x, y, cfg.fast_threshold));

  std::vector<Keypoint> kps;
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const float s = score.at(x, y);
      if (s <= 0.f) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float other = score.at(x + dx, y + dy);
          if (other > s || (other == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      if (!is_max) continue;
      Keypoint kp;
      kp.px = Vec2(x, y);
      kp.response = s;
      kps.push_back(kp);
    }
  }

  std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.px.y() != b.px.y()) return a.px.y() < b.px.y();
    return a.px.x() < b.px.x();
  });
  if (int(kps.size()) > cfg.max_keypoints) kps.resize(cfg.max_keypoints);

  const ImageF smooth = box_blur(intensity);
  for (Keypoint& kp : kps) {
    const int x = int(kp.px.x()), y = int(kp.px.y());
    // Intensity centroid orientation over a radius-7 disc.
    double m01 = 0.0, m10 = 0.0;
    for (int dy = -7; dy <= 7; ++dy)
      for (int dx = -7; dx <= 7; ++dx) {
        if (dx * dx + dy * dy > 49) continue;
        const int xx = std::clamp(x + dx, 0, w - 1), yy = std::clamp(y + dy, 0, h - 1);
        m10 += dx * intensity.at(xx, yy);
        m01 += dy * intensity.at(xx, yy);
      }
    kp.angle = std::atan2(m01, m10);
    const double ca = std::cos(kp.angle), sa = std::sin(kp.angle);
    const auto sample = [&](int px, int py) {
      const int rx = int(std::lround(ca * px - sa * py));
      const int ry = int(std::lround(sa * px + ca * py));
      return smooth.at(std::clamp(x + rx, 0, w - 1), std::clamp(y + ry, 0, h - 1));
    };
    kp.desc = {};
    for (int i = 0; i < 256; ++i) {
      const auto& p = pattern().pairs[i];
      if (sample(p[0], p[1]) < sample(p[2], p[3]))
        kp.desc[i >> 6] |= (1ull << (i & 63));
    }
  }
  return kps;
}

}  // namespace sfr
