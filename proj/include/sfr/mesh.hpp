#pragma once

#include "sfr/common.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace sfr {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
  double surface_area() const;
  std::pair<Vec3, Vec3> aabb() const;
  // V - E + F with edges counted once.
  int euler_characteristic() const;
};

// n points uniform over the surface (area-weighted triangle choice, uniform
// barycentric sample). Deterministic under seed.
std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int n, std::uint64_t seed);

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Uniform-grid accelerated nearest-triangle queries.
class MeshDistanceIndex {
 public:
  explicit MeshDistanceIndex(const TriangleMesh& mesh, double cell_size = 0.0);
  double distance(const Vec3& p) const;

 private:
  const TriangleMesh& mesh_;
  double cell_ = 0;
  Vec3 origin_ = Vec3::Zero();
  Vec3i dims_ = Vec3i::Zero();
  std::vector<std::vector<int>> cells_;

  int cell_index(int x, int y, int z) const {
    return (z * dims_.y() + y) * dims_.x() + x;
  }
  double brute_force(const Vec3& p) const;
};

// Uniform-grid accelerated nearest-point queries.
class PointDistanceIndex {
 public:
  explicit PointDistanceIndex(const std::vector<Vec3>& points, double cell_size = 0.0);
  double distance(const Vec3& p) const;

 private:
  const std::vector<Vec3>& points_;
  double cell_ = 0;
  Vec3 origin_ = Vec3::Zero();
  Vec3i dims_ = Vec3i::Zero();
  std::vector<std::vector<int>> cells_;

  int cell_index(int x, int y, int z) const {
    return (z * dims_.y() + y) * dims_.x() + x;
  }
};

}  // namespace sfr
