#include "sfr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_map>

namespace sfr {

double TriangleMesh::surface_area() const {
  double area = 0.0;
  for (const auto& f : faces) {
    area += 0.5 * (vertices[f[1]] - vertices[f[0]]).cross(vertices[f[2]] - vertices[f[0]]).norm();
  }
  return area;
}

std::pair<Vec3, Vec3> TriangleMesh::aabb() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());
  for (const Vec3& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

int TriangleMesh::euler_characteristic() const {
  std::set<std::pair<int, int>> edges;
  for (const auto& f : faces) {
    for (int i = 0; i < 3; ++i) {
      const int a = f[i], b = f[(i + 1) % 3];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return int(vertices.size()) - int(edges.size()) + int(faces.size());
}

std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  std::vector<Vec3> out;
  if (mesh.faces.empty() || n <= 0) return out;
  std::vector<double> cdf(mesh.faces.size());
  double acc = 0.0;
  for (size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    acc += 0.5 * (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                     .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]])
                     .norm();
    cdf[i] = acc;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double r = uni(rng) * acc;
    const size_t t = std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
    const auto& f = mesh.faces[std::min(t, mesh.faces.size() - 1)];
    double u = uni(rng), v = uni(rng);
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.push_back(mesh.vertices[f[0]] + u * (mesh.vertices[f[1]] - mesh.vertices[f[0]]) +
                  v * (mesh.vertices[f[2]] - mesh.vertices[f[0]]));
  }
  return out;
}

// Ericson, Real-Time Collision Detection, 5.1.5.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).norm();

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).norm();

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).norm();

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return (p - (a + v * ab + w * ac)).norm();
}

namespace {

double pick_cell_size(const Vec3& extent, size_t items, double requested) {
  if (requested > 0.0) return requested;
  const double vol = std::max(extent.prod(), 1e-9);
  return std::max(0.01, std::cbrt(vol / std::max<size_t>(items, 1)) * 2.0);
}

}  // namespace

MeshDistanceIndex::MeshDistanceIndex(const TriangleMesh& mesh, double cell_size)
    : mesh_(mesh) {
  if (mesh.faces.empty()) return;
  auto [lo, hi] = mesh.aabb();
  cell_ = pick_cell_size(hi - lo, mesh.faces.size(), cell_size);
  origin_ = lo - Vec3::Constant(cell_ * 0.5);
  const Vec3 span = hi - origin_ + Vec3::Constant(cell_ * 0.5);
  for (int i = 0; i < 3; ++i)
    dims_[i] = std::max(1, int(std::ceil(span[i] / cell_)) + 1);
  cells_.resize(size_t(dims_.x()) * dims_.y() * dims_.z());
  for (int f = 0; f < int(mesh.faces.size()); ++f) {
    Vec3 tlo = mesh.vertices[mesh.faces[f][0]], thi = tlo;
    for (int i = 1; i < 3; ++i) {
      tlo = tlo.cwiseMin(mesh.vertices[mesh.faces[f][i]]);
      thi = thi.cwiseMax(mesh.vertices[mesh.faces[f][i]]);
    }
    Vec3i c0, c1;
    for (int i = 0; i < 3; ++i) {
      c0[i] = std::clamp(int((tlo[i] - origin_[i]) / cell_), 0, dims_[i] - 1);
      c1[i] = std::clamp(int((thi[i] - origin_[i]) / cell_), 0, dims_[i] - 1);
    }
    for (int z = c0.z(); z <= c1.z(); ++z)
      for (int y = c0.y(); y <= c1.y(); ++y)
        for (int x = c0.x(); x <= c1.x(); ++x) cells_[cell_index(x, y, z)].push_back(f);
  }
}

double MeshDistanceIndex::brute_force(const Vec3& p) const {
  double best = std::numeric_limits<double>::max();
  for (const auto& f : mesh_.faces)
    best = std::min(best, point_triangle_distance(p, mesh_.vertices[f[0]],
                                                  mesh_.vertices[f[1]], mesh_.vertices[f[2]]));
  return best;
}

double MeshDistanceIndex::distance(const Vec3& p) const {
  if (mesh_.faces.empty()) return std::numeric_limits<double>::max();
  Vec3i c;
  for (int i = 0; i < 3; ++i)
    c[i] = std::clamp(int((p[i] - origin_[i]) / cell_), 0, dims_[i] - 1);

  double best = std::numeric_limits<double>::max();
  const int max_ring = dims_.maxCoeff();
  for (int ring = 0; ring <= max_ring; ++ring) {
    // A triangle in shell `ring` is at least (ring - 1) * cell away.
    if (best < (ring - 1) * cell_) break;
    for (int z = c.z() - ring; z <= c.z() + ring; ++z) {
      if (z < 0 || z >= dims_.z()) continue;
      for (int y = c.y() - ring; y <= c.y() + ring; ++y) {
        if (y < 0 || y >= dims_.y()) continue;
        for (int x = c.x() - ring; x <= c.x() + ring; ++x) {
          if (x < 0 || x >= dims_.x()) continue;
          const bool shell = (z == c.z() - ring || z == c.z() + ring || y == c.y() - ring ||
                              y == c.y() + ring || x == c.x() - ring || x == c.x() + ring);
          if (!shell) continue;
          for (int f : cells_[cell_index(x, y, z)]) {
            best = std::min(best,
                            point_triangle_distance(p, mesh_.vertices[mesh_.faces[f][0]],
                                                    mesh_.vertices[mesh_.faces[f][1]],
                                                    mesh_.vertices[mesh_.faces[f][2]]));
          }
        }
      }
    }
  }
  if (best == std::numeric_limits<double>::max()) return brute_force(p);
  return best;
}

PointDistanceIndex::PointDistanceIndex(const std::vector<Vec3>& points, double cell_size)
    : points_(points) {
  if (points.empty()) return;
  Vec3 lo = points[0], hi = points[0];
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  cell_ = pick_cell_size(hi - lo, points.size(), cell_size);
  origin_ = lo;
  const Vec3 span = hi - lo;
  for (int i = 0; i < 3; ++i)
    dims_[i] = std::max(1, int(std::ceil(span[i] / cell_)) + 1);
  cells_.resize(size_t(dims_.x()) * dims_.y() * dims_.z());
  for (int i = 0; i < int(points.size()); ++i) {
    Vec3i c;
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(int((points[i][a] - origin_[a]) / cell_), 0, dims_[a] - 1);
    cells_[cell_index(c.x(), c.y(), c.z())].push_back(i);
  }
}

double PointDistanceIndex::distance(const Vec3& p) const {
  if (points_.empty()) return std::numeric_limits<double>::max();
  Vec3i c;
  for (int i = 0; i < 3; ++i)
    c[i] = std::clamp(int((p[i] - origin_[i]) / cell_), 0, dims_[i] - 1);
  double best = std::numeric_limits<double>::max();
  const int max_ring = dims_.maxCoeff();
  for (int ring = 0; ring <= max_ring; ++ring) {
    if (best < (ring - 1) * cell_) break;
    for (int z = c.z() - ring; z <= c.z() + ring; ++z) {
      if (z < 0 || z >= dims_.z()) continue;
      for (int y = c.y() - ring; y <= c.y() + ring; ++y) {
        if (y < 0 || y >= dims_.y()) continue;
        for (int x = c.x() - ring; x <= c.x() + ring; ++x) {
          if (x < 0 || x >= dims_.x()) continue;
          const bool shell = (z == c.z() - ring || z == c.z() + ring || y == c.y() - ring ||
                              y == c.y() + ring || x == c.x() - ring || x == c.x() + ring);
          if (!shell) continue;
          for (int i : cells_[cell_index(x, y, z)])
            best = std::min(best, (points_[i] - p).norm());
        }
      }
    }
  }
  return best;
}

}  // namespace sfr
