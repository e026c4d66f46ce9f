#pragma once

#include "sfr/frame.hpp"
#include "sfr/geometry.hpp"
#include "sfr/render_types.hpp"

#include <unordered_map>
#include <vector>

namespace sfr {

// Spherical harmonics, order 1: evaluation along a unit direction.
constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr int kShCoeffs = 4;

using ShCoeffs = Eigen::Matrix<double, kShCoeffs, 3>;  // rows: basis, cols: rgb

Vec3 sh_eval(const ShCoeffs& c, const Vec3& dir, int order);
ShCoeffs sh_from_rgb(const Vec3& rgb);  // DC term only

// Map primitive: an oriented Gaussian disk plus its information-filter state.
// The disk normal is the local z-axis of r. lambda/eta hold the diagonal
// information matrix and information vector over the [position; normal] state.
struct Surfel {
  Vec3 p = Vec3::Zero();
  Vec2 s = Vec2::Ones();
  Quat r = Quat::Identity();
  double o = 1.0;
  ShCoeffs c = ShCoeffs::Zero();
  Vec6 lambda = Vec6::Zero();
  Vec6 eta = Vec6::Zero();
  int created_frame = 0;
  int last_observed = 0;

  Vec3 normal() const { return r * Vec3::UnitZ(); }
  double confidence() const { return lambda.sum(); }  // tr(Lambda)
};

struct MapConfig {
  double alpha_s = 2.0;    // pixel scaling factor for adaptive scale
  double tau_o = 0.5;      // accumulated-opacity spawn threshold
  double delta_s = 0.03;   // surface thickness threshold, meters
  double tau_d = 0.06;     // depth-disparity spawn threshold (2 * delta_s)
  double o_init = 0.8;
  int init_stride = 2;     // sample every n-th pixel in each dimension
  double cell_size = 0.1;  // spatial index cell, meters
  int sh_order = 1;
};

class SurfelMap {
 public:
  explicit SurfelMap(double cell_size = 0.1) : cell_size_(cell_size) {}

  int add(const Surfel& s);
  int size() const { return int(surfels_.size()); }
  bool empty() const { return surfels_.empty(); }

  const Surfel& operator[](int id) const { return surfels_[id]; }
  const std::vector<Surfel>& surfels() const { return surfels_; }

  // Single-writer mutation: edit through mutate(), then commit() to restore
  // the spatial index and anchor invariants.
  Surfel& mutate(int id) { return surfels_[id]; }
  void commit(int id);

  // Fusion snapshot used by the geometric regularizer.
  void set_anchor(int id, const Vec3& p_f, const Vec3& n_f);
  const Vec3& anchor_p(int id) const { return anchor_p_[id]; }
  const Vec3& anchor_n(int id) const { return anchor_n_[id]; }

  const std::vector<int>* cell_at(const Vec3& p) const;
  double cell_size() const { return cell_size_; }

  // AABB over surfel centers; undefined on an empty map.
  std::pair<Vec3, Vec3> aabb() const;

  std::uint64_t cell_key(const Vec3& p) const;

 private:
  double cell_size_;
  std::vector<Surfel> surfels_;
  std::vector<Vec3> anchor_p_, anchor_n_;
  std::vector<std::uint64_t> cell_of_;
  std::unordered_map<std::uint64_t, std::vector<int>> index_;
};

Vec2 adaptive_scale(double d, const Intrinsics& k, double alpha_s);

// Quaternion whose rotation maps (0,0,1) onto n, tangent axes chosen via the
// deterministic orthonormal completion.
Quat rotation_from_normal(const Vec3& n);

struct NoiseParams;  // fusion.hpp

std::vector<Surfel> initialize_surfels(const ProcessedFrame& frame, const Pose& pose,
                                       const RenderOutput& render, const MapConfig& cfg,
                                       const NoiseParams& noise);

std::vector<int> select_visible(const SurfelMap& map, const Pose& pose, const Intrinsics& k);

std::vector<int> select_surface(const SurfelMap& map, const std::vector<int>& visible,
                                const RenderOutput& render, const Pose& pose,
                                const Intrinsics& k, double delta_s);

std::vector<Surfel> extract_confident(const SurfelMap& map, double tau_conf);

}  // namespace sfr
