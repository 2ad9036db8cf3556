#pragma once

#include "resim/geometry.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace resim {

struct RayHit {
  double distance = 0.0;
  std::uint32_t triangle = 0;
};

inline constexpr double kBarycentricEpsilon = 1e-9;
inline constexpr double kMinHitDistance = 1e-9;

/// Two-sided Moller-Trumbore test with a small tolerance on the barycentric
/// bounds so rays through shared edges do not slip between triangles.
std::optional<double> ray_triangle_intersect(const Vec3& origin, const Vec3& direction,
                                             const Vec3& v0, const Vec3& v1, const Vec3& v2);

/// Bounding-volume hierarchy over a triangle mesh (median split on the
/// longest centroid axis). A default-constructed Bvh is an empty scene.
class Bvh {
 public:
  struct Node {
    Aabb bounds;
    std::uint32_t left = 0;   // inner nodes only
    std::uint32_t right = 0;  // inner nodes only
    std::uint32_t first = 0;  // leaf: offset into triangle_order()
    std::uint32_t count = 0;  // leaf: triangle count; 0 for inner nodes
    bool is_leaf() const { return count > 0; }
  };

  Bvh() = default;

  /// Nearest hit with distance in (kMinHitDistance, max_distance]. Equal
  /// distances resolve to the lower triangle index.
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& direction,
                                  double max_distance = std::numeric_limits<double>::infinity()) const;

  const TriangleMesh& mesh() const { return mesh_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& triangle_order() const { return order_; }
  bool empty() const { return nodes_.empty(); }

 private:
  friend Bvh build_bvh(const TriangleMesh& mesh, std::uint32_t max_leaf_size);

  std::uint32_t build(std::uint32_t first, std::uint32_t count, std::uint32_t max_leaf,
                      const std::vector<Vec3>& centroids);

  TriangleMesh mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

/// Throws std::invalid_argument for an empty mesh.
Bvh build_bvh(const TriangleMesh& mesh, std::uint32_t max_leaf_size = 4);

}  // namespace resim
