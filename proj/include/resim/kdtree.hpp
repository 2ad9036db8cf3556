#pragma once

#include "resim/geometry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace resim {

struct Neighbor {
  std::size_t index = 0;
  double distance_sq = 0.0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.distance_sq < b.distance_sq ||
           (a.distance_sq == b.distance_sq && a.index < b.index);
  }
};

/// Balanced k-d tree over a fixed point set.
///
/// Queries are exact. Ties between equidistant points resolve to the lower
/// point index so results match a brute-force scan exactly. The index keeps
/// its own copy of the points and is immutable after construction.
class NearestNeighborIndex {
 public:
  NearestNeighborIndex() = default;
  explicit NearestNeighborIndex(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// Precondition: !empty().
  Neighbor nearest(const Vec3& query) const;

  /// Up to k neighbors sorted by (distance, index).
  std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const;

 private:
  struct Node {
    std::uint32_t point = 0;  // index into points_
    std::uint8_t axis = 0;
  };

  void build(std::size_t lo, std::size_t hi, std::vector<std::uint32_t>& order);
  void search_nearest(std::size_t lo, std::size_t hi, const Vec3& q, Neighbor& best) const;
  void search_knn(std::size_t lo, std::size_t hi, const Vec3& q, std::size_t k,
                  std::vector<Neighbor>& heap) const;

  std::vector<Vec3> points_;
  // Implicit tree: the node for range [lo, hi) sits at mid = (lo + hi) / 2,
  // with children over [lo, mid) and [mid + 1, hi).
  std::vector<Node> nodes_;
};

}  // namespace resim
