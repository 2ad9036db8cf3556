#include "resim/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace resim {

NearestNeighborIndex::NearestNeighborIndex(std::span<const Vec3> points)
    : points_(points.begin(), points.end()) {
  if (points_.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("NearestNeighborIndex: too many points");
  }
  std::vector<std::uint32_t> order(points_.size());
  std::iota(order.begin(), order.end(), 0u);
  nodes_.resize(points_.size());
  build(0, points_.size(), order);
}

void NearestNeighborIndex::build(std::size_t lo, std::size_t hi,
                                 std::vector<std::uint32_t>& order) {
  if (lo >= hi) return;
  Aabb box;
  for (std::size_t i = lo; i < hi; ++i) box.extend(points_[order[i]]);
  int axis = 0;
  box.extent().maxCoeff(&axis);
  const std::size_t mid = (lo + hi) / 2;
  std::nth_element(order.begin() + lo, order.begin() + mid, order.begin() + hi,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double va = points_[a][axis];
                     const double vb = points_[b][axis];
                     return va < vb || (va == vb && a < b);
                   });
  nodes_[mid] = {order[mid], static_cast<std::uint8_t>(axis)};
  build(lo, mid, order);
  build(mid + 1, hi, order);
}

void NearestNeighborIndex::search_nearest(std::size_t lo, std::size_t hi, const Vec3& q,
                                          Neighbor& best) const {
  if (lo >= hi) return;
  const std::size_t mid = (lo + hi) / 2;
  const Node& node = nodes_[mid];
  const Neighbor cand{node.point, (points_[node.point] - q).squaredNorm()};
  if (cand < best) best = cand;
  const double diff = q[node.axis] - points_[node.point][node.axis];
  const bool go_left = diff < 0.0;
  if (go_left) {
    search_nearest(lo, mid, q, best);
    if (diff * diff <= best.distance_sq) search_nearest(mid + 1, hi, q, best);
  } else {
    search_nearest(mid + 1, hi, q, best);
    if (diff * diff <= best.distance_sq) search_nearest(lo, mid, q, best);
  }
}

Neighbor NearestNeighborIndex::nearest(const Vec3& query) const {
  if (points_.empty()) throw std::logic_error("nearest() on empty index");
  Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  search_nearest(0, points_.size(), query, best);
  return best;
}

void NearestNeighborIndex::search_knn(std::size_t lo, std::size_t hi, const Vec3& q,
                                      std::size_t k, std::vector<Neighbor>& heap) const {
  if (lo >= hi) return;
  const std::size_t mid = (lo + hi) / 2;
  const Node& node = nodes_[mid];
  const Neighbor cand{node.point, (points_[node.point] - q).squaredNorm()};
  if (heap.size() < k) {
    heap.push_back(cand);
    std::push_heap(heap.begin(), heap.end());
  } else if (cand < heap.front()) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = cand;
    std::push_heap(heap.begin(), heap.end());
  }
  const double diff = q[node.axis] - points_[node.point][node.axis];
  auto worth_visiting = [&]() {
    return heap.size() < k || diff * diff <= heap.front().distance_sq;
  };
  if (diff < 0.0) {
    search_knn(lo, mid, q, k, heap);
    if (worth_visiting()) search_knn(mid + 1, hi, q, k, heap);
  } else {
    search_knn(mid + 1, hi, q, k, heap);
    if (worth_visiting()) search_knn(lo, mid, q, k, heap);
  }
}

std::vector<Neighbor> NearestNeighborIndex::knn(const Vec3& query, std::size_t k) const {
  std::vector<Neighbor> heap;
  if (k == 0 || points_.empty()) return heap;
  heap.reserve(std::min(k, points_.size()));
  search_knn(0, points_.size(), query, k, heap);
  std::sort_heap(heap.begin(), heap.end());
  return heap;
}

}  // namespace resim
