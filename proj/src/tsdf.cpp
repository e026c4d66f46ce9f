#include "sfr/tsdf.hpp"

#include "sfr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mc_tables.inl"

namespace sfr {

namespace {

constexpr std::uint64_t kCoordOffset = 1 << 19;  // center signed block coords

std::uint64_t block_key(const Vec3i& block) {
  return (std::uint64_t(std::uint32_t(block.x() + kCoordOffset)) & 0xFFFFF) |
         ((std::uint64_t(std::uint32_t(block.y() + kCoordOffset)) & 0xFFFFF) << 20) |
         ((std::uint64_t(std::uint32_t(block.z() + kCoordOffset)) & 0xFFFFF) << 40);
}

Vec3i block_of_voxel(const Vec3i& v) {
  return Vec3i(v.x() >> 3, v.y() >> 3, v.z() >> 3);
}

int voxel_bit(const Vec3i& v) {
  return (v.x() & 7) | ((v.y() & 7) << 3) | ((v.z() & 7) << 6);
}

}  // namespace

void OccupancyGrid::mark(const Vec3i& v) {
  if (!lattice_.in_bounds(v)) return;
  auto& blk = blocks_[block_key(block_of_voxel(v))];
  const int bit = voxel_bit(v);
  blk[bit >> 6] |= (1ull << (bit & 63));
}

bool OccupancyGrid::occupied(const Vec3i& v) const {
  if (!lattice_.in_bounds(v)) return false;
  auto it = blocks_.find(block_key(block_of_voxel(v)));
  if (it == blocks_.end()) return false;
  const int bit = voxel_bit(v);
  return (it->second[bit >> 6] >> (bit & 63)) & 1;
}

size_t OccupancyGrid::count() const {
  size_t n = 0;
  for (const auto& [key, blk] : blocks_)
    for (std::uint64_t word : blk) n += std::uint64_t(__builtin_popcountll(word));
  return n;
}

std::vector<Vec3i> OccupancyGrid::occupied_voxels() const {
  std::vector<Vec3i> out;
  for (const auto& [key, blk] : blocks_) {
    const Vec3i base = TsdfVolume::block_origin_voxel(key);
    for (int i = 0; i < 512; ++i) {
      if ((blk[i >> 6] >> (i & 63)) & 1)
        out.push_back(base + Vec3i(i & 7, (i >> 3) & 7, i >> 6));
    }
  }
  std::sort(out.begin(), out.end(), [](const Vec3i& a, const Vec3i& b) {
    if (a.z() != b.z()) return a.z() < b.z();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.x() < b.x();
  });
  return out;
}

void OccupancyGrid::dilate(int r) {
  if (r <= 0) return;
  // Separable cube dilation: one axis at a time.
  for (int axis = 0; axis < 3; ++axis) {
    const std::vector<Vec3i> occ = occupied_voxels();
    for (const Vec3i& v : occ) {
      for (int d = -r; d <= r; ++d) {
        if (d == 0) continue;
        Vec3i u = v;
        u[axis] += d;
        mark(u);
      }
    }
  }
}

const TsdfVoxel* TsdfVolume::find(const Vec3i& v) const {
  if (!lattice_.in_bounds(v)) return nullptr;
  auto it = blocks_.find(block_key(block_of_voxel(v)));
  if (it == blocks_.end()) return nullptr;
  return &it->second[voxel_bit(v)];
}

TsdfVoxel* TsdfVolume::find(const Vec3i& v) {
  return const_cast<TsdfVoxel*>(static_cast<const TsdfVolume*>(this)->find(v));
}

void TsdfVolume::allocate_block_of(const Vec3i& v) {
  if (!lattice_.in_bounds(v)) return;
  blocks_.try_emplace(block_key(block_of_voxel(v)));
}

std::vector<std::uint64_t> TsdfVolume::allocated_blocks() const {
  std::vector<std::uint64_t> keys;
  keys.reserve(blocks_.size());
  for (const auto& [key, blk] : blocks_) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

Vec3i TsdfVolume::block_origin_voxel(std::uint64_t key) {
  const int bx = int(key & 0xFFFFF) - int(kCoordOffset);
  const int by = int((key >> 20) & 0xFFFFF) - int(kCoordOffset);
  const int bz = int((key >> 40) & 0xFFFFF) - int(kCoordOffset);
  return Vec3i(bx << 3, by << 3, bz << 3);
}

VoxelLattice lattice_for_map(const SurfelMap& map, double voxel_size, double margin) {
  VoxelLattice lat;
  lat.voxel_size = voxel_size;
  if (map.empty()) {
    lat.dims = Vec3i::Ones();
    return lat;
  }
  auto [lo, hi] = map.aabb();
  lat.origin = lo - Vec3::Constant(margin);
  const Vec3 span = hi + Vec3::Constant(margin) - lat.origin;
  for (int i = 0; i < 3; ++i) lat.dims[i] = int(std::ceil(span[i] / voxel_size)) + 1;
  return lat;
}

OccupancyGrid build_occupancy(const SurfelMap& map, const VoxelLattice& lattice,
                              int dilation_r) {
  OccupancyGrid grid(lattice);
  for (const Surfel& s : map.surfels()) grid.mark(lattice.voxel_of(s.p));
  grid.dilate(dilation_r);
  return grid;
}

void integrate_depth(TsdfVolume& vol, const ImageD& depth, const Pose& pose,
                     const Intrinsics& k, const OccupancyGrid* mask, int threads) {
  const VoxelLattice& lat = vol.lattice();
  const double mu = vol.truncation();
  const Mat3 R = pose.rotation();

  // Allocation: blocks touched by the truncation band along each pixel ray.
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth.at(x, y);
      if (d <= 0.0 || !std::isfinite(d)) continue;
      const Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = R * dir_cam;
      if (mask && !mask->occupied_point(pose.t + d * dir)) continue;
      const double step = lat.voxel_size * 0.5;
      for (double t = d - mu; t <= d + mu + 1e-9; t += step) {
        if (t <= 0) continue;
        const Vec3i v = lat.voxel_of(pose.t + t * dir);
        if (mask && !mask->occupied(v)) continue;
        vol.allocate_block_of(v);
      }
    }
  }

  // Update: every voxel of every allocated block, projectively.
  const std::vector<std::uint64_t> keys = vol.allocated_blocks();
  const Pose world_to_cam = pose.inverse();
  parallel_ranges(0, std::int64_t(keys.size()), std::max<int>(1, int(keys.size())),
                  [&](int, std::int64_t lo, std::int64_t hi) {
    for (std::int64_t bi = lo; bi < hi; ++bi) {
      const Vec3i base = TsdfVolume::block_origin_voxel(keys[bi]);
      for (int i = 0; i < 512; ++i) {
        const Vec3i v = base + Vec3i(i & 7, (i >> 3) & 7, i >> 6);
        if (!lat.in_bounds(v)) continue;
        if (mask && !mask->occupied(v)) continue;
        const Vec3 p_cam = world_to_cam * lat.center_of(v);
        if (p_cam.z() <= 0.0) continue;
        const int px = int(std::lround(k.fx * p_cam.x() / p_cam.z() + k.cx));
        const int py = int(std::lround(k.fy * p_cam.y() / p_cam.z() + k.cy));
        if (!depth.contains(px, py)) continue;
        const double d = depth.at(px, py);
        if (d <= 0.0 || !std::isfinite(d)) continue;
        const double sdf = d - p_cam.z();
        if (std::abs(sdf) > mu) continue;
        if (mask) {
          const Vec3 surf = pose * Vec3((px - k.cx) / k.fx * d, (py - k.cy) / k.fy * d, d);
          if (!mask->occupied_point(surf)) continue;
        }
        TsdfVoxel* vox = vol.find(v);
        if (!vox) continue;
        const float t_new = float(std::clamp(sdf / mu, -1.0, 1.0));
        vox->tsdf = (vox->tsdf * vox->weight + t_new) / (vox->weight + 1.f);
        vox->weight += 1.f;
      }
    }
  }, threads);
}

TriangleMesh marching_cubes(const TsdfVolume& vol) {
  TriangleMesh mesh;
  const VoxelLattice& lat = vol.lattice();

  // Edge key: lower voxel coordinate + axis.
  struct EdgeKeyHash {
    size_t operator()(const std::uint64_t& k) const { return std::hash<std::uint64_t>()(k); }
  };
  std::unordered_map<std::uint64_t, int, EdgeKeyHash> edge_vertex;
  const auto edge_key = [](const Vec3i& v, int axis) {
    return (std::uint64_t(std::uint32_t(v.x() + (1 << 19))) & 0xFFFFF) |
           ((std::uint64_t(std::uint32_t(v.y() + (1 << 19))) & 0xFFFFF) << 20) |
           ((std::uint64_t(std::uint32_t(v.z() + (1 << 19))) & 0xFFFFF) << 40) |
           (std::uint64_t(axis) << 60);
  };

  for (std::uint64_t key : vol.allocated_blocks()) {
    const Vec3i base = TsdfVolume::block_origin_voxel(key);
    for (int i = 0; i < 512; ++i) {
      const Vec3i v0 = base + Vec3i(i & 7, (i >> 3) & 7, i >> 6);
      float f[8];
      int cube_index = 0;
      bool complete = true;
      for (int cidx = 0; cidx < 8; ++cidx) {
        const Vec3i vc =
            v0 + Vec3i(mc::kCornerShift[cidx][0], mc::kCornerShift[cidx][1],
                       mc::kCornerShift[cidx][2]);
        const TsdfVoxel* vox = vol.find(vc);
        if (!vox || vox->weight <= 0.f) {
          complete = false;
          break;
        }
        f[cidx] = vox->tsdf;
        if (f[cidx] < 0.f) cube_index |= (1 << cidx);
      }
      if (!complete || cube_index == 0 || cube_index == 255) continue;

      int edge_to_index[12];
      for (int e = 0; e < 12; ++e) {
        if (!(mc::kEdgeTable[cube_index] & (1 << e))) continue;
        const Vec3i ev = v0 + Vec3i(mc::kEdgeShift[e][0], mc::kEdgeShift[e][1],
                                    mc::kEdgeShift[e][2]);
        const int axis = mc::kEdgeShift[e][3];
        const std::uint64_t ek = edge_key(ev, axis);
        auto it = edge_vertex.find(ek);
        if (it != edge_vertex.end()) {
          edge_to_index[e] = it->second;
          continue;
        }
        const double f0 = std::abs(double(f[mc::kEdgeToVert[e][0]]));
        const double f1 = std::abs(double(f[mc::kEdgeToVert[e][1]]));
        Vec3 pt = lat.center_of(ev);
        pt[axis] += f0 * lat.voxel_size / (f0 + f1);
        edge_to_index[e] = int(mesh.vertices.size());
        edge_vertex.emplace(ek, edge_to_index[e]);
        mesh.vertices.push_back(pt);
      }
      for (int t = 0; mc::kTriTable[cube_index][t] != -1; t += 3) {
        mesh.faces.push_back({edge_to_index[mc::kTriTable[cube_index][t]],
                              edge_to_index[mc::kTriTable[cube_index][t + 2]],
                              edge_to_index[mc::kTriTable[cube_index][t + 1]]});
      }
    }
  }
  return mesh;
}

int audit_voxels_outside_mask(const TsdfVolume& vol, const OccupancyGrid& mask) {
  int violations = 0;
  vol.for_each_voxel([&](const Vec3i& v, const TsdfVoxel& vox) {
    if (vox.weight > 0.f && !mask.occupied(v)) ++violations;
  });
  return violations;
}

}  // namespace sfr
