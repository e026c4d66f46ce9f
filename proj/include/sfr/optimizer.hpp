#pragma once

#include "sfr/frame.hpp"
#include "sfr/render.hpp"
#include "sfr/surfel.hpp"

#include <cstdint>
#include <deque>
#include <vector>

namespace sfr {

struct LossWeights {
  double w_d = 0.5;
  double w_n = 0.1;
  double w_reg = 1.0;
  double w_reg_n = 0.1;
};

ImageV3 to_rgb01(const ImageRgb8& img);

// Rendered-vs-observed targets for one keyframe.
struct OptTarget {
  Intrinsics k;
  Pose pose;
  ImageV3 color;
  ImageD depth;
  ImageV3 normal;  // camera frame
  ImageU8 valid;
  int frame_id = 0;
};

OptTarget make_target(const ProcessedFrame& frame, const Pose& pose);

double loss_photometric(const RenderOutput& render, const ImageV3& target);
double loss_depth(const RenderOutput& render, const ImageD& target_depth,
                  const ImageU8& target_valid);
double loss_normal(const RenderOutput& render, const ImageV3& target_normal,
                   const ImageU8& target_valid);
// Mean over surfels of ||p - p_f|| + w_reg_n * |1 - n . n_f| against the
// fusion anchors stored in the map.
double loss_reg(const SurfelMap& map, double w_reg_n);

struct LossTerms {
  double color = 0, depth = 0, normal = 0, reg = 0, total = 0;
};
LossTerms total_loss(const RenderOutput& render, const OptTarget& target,
                     const SurfelMap& map, const LossWeights& w);

// Gradients in the optimization parameterization: position, log-scales,
// local rotation tangent (right perturbation r * exp(delta)), logit opacity,
// SH coefficients.
struct SurfelGrads {
  std::vector<Vec3> p;
  std::vector<Vec2> log_s;
  std::vector<Vec3> rot;
  std::vector<double> logit_o;
  std::vector<ShCoeffs> c;

  void init(int n);
};

SurfelGrads backward(const SurfelMap& map, const RenderOutput& render,
                     const OptTarget& target, const LossWeights& w,
                     const RenderOptions& opts, int sh_order = 1);

struct OptimizerConfig {
  double lr_p = 1e-4;
  double lr_r = 1e-3;
  double lr_s = 1e-3;
  double lr_o = 5e-2;
  double lr_c = 2.5e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int n_batch = 8;
  int m = 2;
};

// Adam first/second moment buffers, one slot per surfel per group.
struct OptimizerState {
  int step = 0;
  std::vector<Vec3> m_p, v_p;
  std::vector<Vec2> m_s, v_s;
  std::vector<Vec3> m_r, v_r;
  std::vector<double> m_o, v_o;
  std::vector<ShCoeffs> m_c, v_c;

  void ensure(int n);
};

class KeyframeWindow {
 public:
  explicit KeyframeWindow(int capacity) : capacity_(capacity) {}
  void push(OptTarget t) {
    frames_.push_back(std::move(t));
    if (int(frames_.size()) > capacity_) frames_.pop_front();
  }
  int size() const { return int(frames_.size()); }
  bool empty() const { return frames_.empty(); }
  const OptTarget& operator[](int i) const { return frames_[i]; }

 private:
  int capacity_;
  std::deque<OptTarget> frames_;
};

struct OptStats {
  std::vector<double> loss_per_iteration;
  int iterations = 0;
};

// m * |window| iterations; each samples one keyframe uniformly, renders,
// backpropagates, and applies one Adam step per parameter group.
OptStats optimize_batch(SurfelMap& map, const KeyframeWindow& window, int m,
                        OptimizerState& state, const LossWeights& w,
                        const OptimizerConfig& cfg, const RenderOptions& ropts,
                        int sh_order, std::uint64_t seed);

}  // namespace sfr
