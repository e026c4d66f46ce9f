#pragma once

#include "sfr/geometry.hpp"
#include "sfr/image.hpp"
#include "sfr/mesh.hpp"
#include "sfr/surfel.hpp"

#include <unordered_map>
#include <vector>

namespace sfr {

struct MeshingConfig {
  double voxel_size = 0.01;  // meters
  double truncation = 0.04;  // meters (4 voxels)
  int dilation_r = 2;        // voxels
};

// Shared sparse lattice: 8^3 voxel blocks hashed by block coordinate.
// Voxel v covers [origin + v * voxel, origin + (v+1) * voxel).
struct VoxelLattice {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.01;
  Vec3i dims = Vec3i::Zero();  // addressable bound; voxels outside are ignored

  Vec3i voxel_of(const Vec3& p) const {
    return Vec3i(int(std::floor((p.x() - origin.x()) / voxel_size)),
                 int(std::floor((p.y() - origin.y()) / voxel_size)),
                 int(std::floor((p.z() - origin.z()) / voxel_size)));
  }
  Vec3 center_of(const Vec3i& v) const {
    return origin + voxel_size * (v.cast<double>() + Vec3::Constant(0.5));
  }
  bool in_bounds(const Vec3i& v) const {
    return (v.array() >= 0).all() && (v.array() < dims.array()).all();
  }
};

class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  explicit OccupancyGrid(const VoxelLattice& lattice) : lattice_(lattice) {}

  const VoxelLattice& lattice() const { return lattice_; }
  void mark(const Vec3i& v);
  bool occupied(const Vec3i& v) const;
  bool occupied_point(const Vec3& p) const { return occupied(lattice_.voxel_of(p)); }
  size_t count() const;
  std::vector<Vec3i> occupied_voxels() const;  // sorted, for tests

  // Morphological dilation by a (2r+1)^3 cube.
  void dilate(int r);

 private:
  VoxelLattice lattice_;
  std::unordered_map<std::uint64_t, std::array<std::uint64_t, 8>> blocks_;
};

struct TsdfVoxel {
  float tsdf = 0.f;  // units of truncation, in [-1, 1]
  float weight = 0.f;
};

class TsdfVolume {
 public:
  TsdfVolume() = default;
  TsdfVolume(const VoxelLattice& lattice, double truncation)
      : lattice_(lattice), truncation_(truncation) {}

  const VoxelLattice& lattice() const { return lattice_; }
  double truncation() const { return truncation_; }

  const TsdfVoxel* find(const Vec3i& v) const;
  TsdfVoxel* find(const Vec3i& v);
  void allocate_block_of(const Vec3i& v);

  std::vector<std::uint64_t> allocated_blocks() const;  // sorted keys
  static Vec3i block_origin_voxel(std::uint64_t key);

  size_t allocated_voxel_blocks() const { return blocks_.size(); }

  // Visits every stored voxel (weight included), deterministic order.
  template <class F>
  void for_each_voxel(F&& fn) const {
    for (std::uint64_t key : allocated_blocks()) {
      const auto& blk = blocks_.at(key);
      const Vec3i base = block_origin_voxel(key);
      for (int i = 0; i < 512; ++i) {
        const Vec3i v = base + Vec3i(i & 7, (i >> 3) & 7, i >> 6);
        fn(v, blk[i]);
      }
    }
  }

 private:
  friend TriangleMesh marching_cubes(const TsdfVolume&);
  VoxelLattice lattice_;
  double truncation_ = 0.04;
  std::unordered_map<std::uint64_t, std::array<TsdfVoxel, 512>> blocks_;
};

// Lattice sized to cover the surfel map's AABB with a margin.
VoxelLattice lattice_for_map(const SurfelMap& map, double voxel_size, double margin = 0.2);

OccupancyGrid build_occupancy(const SurfelMap& map, const VoxelLattice& lattice,
                              int dilation_r);

// Projective TSDF update restricted to the +-truncation band around the
// observed surface. With a mask, only voxels inside the (dilated) occupancy
// are written, and a pixel contributes only if its surface point's voxel is
// occupied.
void integrate_depth(TsdfVolume& vol, const ImageD& depth, const Pose& pose,
                     const Intrinsics& k, const OccupancyGrid* mask = nullptr,
                     int threads = 0);

TriangleMesh marching_cubes(const TsdfVolume& vol);

// Voxels with weight > 0 outside the mask (0 after any masked integration).
int audit_voxels_outside_mask(const TsdfVolume& vol, const OccupancyGrid& mask);

}  // namespace sfr
