#include "resim/bvh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace resim {

std::optional<double> ray_triangle_intersect(const Vec3& origin, const Vec3& direction,
                                             const Vec3& v0, const Vec3& v1, const Vec3& v2) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 p = direction.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - v0;
  const double u = s.dot(p) * inv;
  if (u < -kBarycentricEpsilon || u > 1.0 + kBarycentricEpsilon) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = direction.dot(q) * inv;
  if (v < -kBarycentricEpsilon || u + v > 1.0 + kBarycentricEpsilon) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (!(t > kMinHitDistance)) return std::nullopt;
  return t;
}

Bvh build_bvh(const TriangleMesh& mesh, std::uint32_t max_leaf_size) {
  if (mesh.triangles.empty()) throw std::invalid_argument("build_bvh: empty mesh");
  mesh.validate();
  Bvh bvh;
  bvh.mesh_ = mesh;
  const auto n = static_cast<std::uint32_t>(mesh.triangles.size());
  std::vector<Vec3> centroids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& t = mesh.triangles[i];
    centroids[i] = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
  }
  bvh.order_.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) bvh.order_[i] = i;
  bvh.build(0, n, std::max(1u, max_leaf_size), centroids);
  return bvh;
}

std::uint32_t Bvh::build(std::uint32_t first, std::uint32_t count, std::uint32_t max_leaf,
                         const std::vector<Vec3>& centroids) {
  const auto self = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb bounds;
  Aabb centroid_bounds;
  for (std::uint32_t i = first; i < first + count; ++i) {
    const auto& t = mesh_.triangles[order_[i]];
    for (auto v : t) bounds.extend(mesh_.vertices[v]);
    centroid_bounds.extend(centroids[order_[i]]);
  }
  // Pad the box so that hits accepted by the barycentric tolerance are never
  // culled by the slab test.
  const double pad = 1e-7 * std::max(1.0, std::max(bounds.min.cwiseAbs().maxCoeff(),
                                                   bounds.max.cwiseAbs().maxCoeff()));
  bounds.min.array() -= pad;
  bounds.max.array() += pad;
  nodes_[self].bounds = bounds;
  const Vec3 extent = centroid_bounds.extent();
  int axis = 0;
  extent.maxCoeff(&axis);
  if (count <= max_leaf || extent[axis] <= 0.0) {
    nodes_[self].first = first;
    nodes_[self].count = count;
    return self;
  }
  const std::uint32_t half = count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + first + half,
                   order_.begin() + first + count, [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = centroids[a][axis];
                     const double cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const std::uint32_t left = build(first, half, max_leaf, centroids);
  const std::uint32_t right = build(first + half, count - half, max_leaf, centroids);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

namespace {

// Entry distance of the ray into `box`, or nullopt when it misses within
// [0, max_t].
std::optional<double> slab_entry(const Aabb& box, const Vec3& origin, const Vec3& inv_dir,
                                 const Vec3& direction, double max_t) {
  double t0 = 0.0;
  double t1 = max_t;
  for (int a = 0; a < 3; ++a) {
    if (direction[a] == 0.0) {
      if (origin[a] < box.min[a] || origin[a] > box.max[a]) return std::nullopt;
      continue;
    }
    double tn = (box.min[a] - origin[a]) * inv_dir[a];
    double tf = (box.max[a] - origin[a]) * inv_dir[a];
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return std::nullopt;
  }
  return t0;
}

bool better(const RayHit& a, const std::optional<RayHit>& b) {
  return !b || a.distance < b->distance || (a.distance == b->distance && a.triangle < b->triangle);
}

}  // namespace

std::optional<RayHit> Bvh::intersect(const Vec3& origin, const Vec3& direction,
                                     double max_distance) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv_dir = direction.cwiseInverse();
  const double slack = 1e-9;
  std::optional<RayHit> best;
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    const double limit = best ? best->distance : max_distance;
    if (!slab_entry(node.bounds, origin, inv_dir, direction, limit + slack)) continue;
    if (node.is_leaf()) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const std::uint32_t tri = order_[i];
        const auto& t = mesh_.triangles[tri];
        const auto d = ray_triangle_intersect(origin, direction, mesh_.vertices[t[0]],
                                              mesh_.vertices[t[1]], mesh_.vertices[t[2]]);
        if (!d || *d > max_distance) continue;
        const RayHit hit{*d, tri};
        if (better(hit, best)) best = hit;
      }
      continue;
    }
    const auto dl = slab_entry(nodes_[node.left].bounds, origin, inv_dir, direction, limit + slack);
    const auto dr = slab_entry(nodes_[node.right].bounds, origin, inv_dir, direction, limit + slack);
    // Push the farther child first so the nearer one is explored next.
    if (dl && dr) {
      if (*dl <= *dr) {
        stack[top++] = node.right;
        stack[top++] = node.left;
      } else {
        stack[top++] = node.left;
        stack[top++] = node.right;
      }
    } else if (dl) {
      stack[top++] = node.left;
    } else if (dr) {
      stack[top++] = node.right;
    }
  }
  return best;
}

}  // namespace resim
