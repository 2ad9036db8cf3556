#include "resim/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

namespace resim {

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int c = 0; c < 8; ++c) {
    m.vertices.emplace_back((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(),
                            (c & 4) ? hi.z() : lo.z());
  }
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

TriangleMesh make_grounded_box(const Vec3& size) {
  return make_box(Vec3(-0.5 * size.x(), -0.5 * size.y(), 0.0),
                  Vec3(0.5 * size.x(), 0.5 * size.y(), size.z()));
}

TriangleMesh make_plane(double half_extent, double z, int cells) {
  cells = std::max(cells, 1);
  TriangleMesh m;
  const int n = cells + 1;
  const double step = 2.0 * half_extent / cells;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      m.vertices.emplace_back(-half_extent + i * step, -half_extent + j * step, z);
    }
  }
  for (int j = 0; j < cells; ++j) {
    for (int i = 0; i < cells; ++i) {
      const auto v00 = static_cast<std::uint32_t>(j * n + i);
      const auto v10 = v00 + 1;
      const auto v01 = v00 + static_cast<std::uint32_t>(n);
      const auto v11 = v01 + 1;
      m.triangles.push_back({v00, v10, v11});
      m.triangles.push_back({v00, v11, v01});
    }
  }
  return m;
}

TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoints;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const auto id = static_cast<std::uint32_t>(v.size() - 1);
      midpoints.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    next.reserve(f.size() * 4);
    for (const auto& tri : f) {
      const auto ab = midpoint(tri[0], tri[1]);
      const auto bc = midpoint(tri[1], tri[2]);
      const auto ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  TriangleMesh m;
  m.vertices.reserve(v.size());
  for (const auto& p : v) m.vertices.push_back(center + radius * p);
  m.triangles = std::move(f);
  return m;
}

double box_signed_distance(const BoxShape& box, const Vec3& p) {
  const Vec3 c = 0.5 * (box.min_corner + box.max_corner);
  const Vec3 half = 0.5 * (box.max_corner - box.min_corner);
  const Vec3 q = (p - c).cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

TriangleMesh SyntheticScene::mesh(int ground_cells, int sphere_subdivisions) const {
  TriangleMesh m = make_plane(ground_half_extent, 0.0, ground_cells);
  for (const auto& b : boxes) m.append(make_box(b.min_corner, b.max_corner));
  for (const auto& s : spheres) m.append(make_icosphere(s.center, s.radius, sphere_subdivisions));
  return m;
}

double SyntheticScene::signed_distance(const Vec3& p) const {
  double d = p.z();
  for (const auto& b : boxes) d = std::min(d, box_signed_distance(b, p));
  for (const auto& s : spheres) d = std::min(d, (p - s.center).norm() - s.radius);
  return d;
}

SyntheticScene demo_scene() {
  SyntheticScene s;
  s.ground_half_extent = 10.0;
  s.boxes = {{Vec3(2.0, -3.0, 0.0), Vec3(4.0, -1.0, 1.5)},
             {Vec3(-5.0, 2.0, 0.0), Vec3(-3.0, 5.0, 2.5)},
             {Vec3(-1.0, -7.0, 0.0), Vec3(3.0, -5.5, 1.0)}};
  s.spheres = {{Vec3(4.0, 4.0, 1.0), 1.2}};
  return s;
}

}  // namespace resim
