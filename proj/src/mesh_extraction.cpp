#include "resim/mesh_extraction.hpp"

#include "mc_tables.hpp"
#include "resim/log.hpp"

#include <stdexcept>
#include <unordered_map>

namespace resim {
namespace {

constexpr std::array<std::array<int, 3>, 8> kCorner = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

constexpr std::array<std::array<int, 2>, 12> kEdge = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
    {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

}  // namespace

TriangleMesh extract_mesh(const SdfGrid& grid, double iso, std::span<const double> weights) {
  const auto& values = grid.values();
  if (!weights.empty() && weights.size() != values.size()) {
    throw std::invalid_argument("extract_mesh: weights size does not match the grid");
  }
  const auto [nx, ny, nz] = grid.dims();
  const std::uint64_t node_count = values.size();
  TriangleMesh mesh;
  // Key: 3 * (index of the edge's lower node) + axis.
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on_edge = [&](std::array<int, 3> a, std::array<int, 3> b) -> std::uint32_t {
    if (b[0] < a[0] || b[1] < a[1] || b[2] < a[2]) std::swap(a, b);
    const int axis = b[0] != a[0] ? 0 : (b[1] != a[1] ? 1 : 2);
    const std::size_t ia = grid.index(a[0], a[1], a[2]);
    const std::size_t ib = grid.index(b[0], b[1], b[2]);
    const double va = values[ia];
    const double vb = values[ib];
    // A crossing exactly on a node is shared by all edges meeting there;
    // keying it by the node keeps the surface connected.
    std::uint64_t key = 3 * static_cast<std::uint64_t>(ia) + axis;
    if (va == iso) key = 3 * node_count + ia;
    else if (vb == iso) key = 3 * node_count + ib;
    auto [it, inserted] = edge_vertex.try_emplace(key, 0);
    if (inserted) {
      const double mu = vb != va ? (iso - va) / (vb - va) : 0.5;
      const Vec3 pa = grid.node_position(a[0], a[1], a[2]);
      const Vec3 pb = grid.node_position(b[0], b[1], b[2]);
      it->second = static_cast<std::uint32_t>(mesh.vertices.size());
      mesh.vertices.push_back(pa + mu * (pb - pa));
    }
    return it->second;
  };

  bool any_inside = false, any_outside = false;
  for (double v : values) {
    if (v < iso) any_inside = true; else any_outside = true;
  }
  if (!any_inside || !any_outside) {
    warn("extract_mesh: no sign change relative to iso; returning an empty mesh");
    return mesh;
  }

  for (int k = 0; k + 1 < nz; ++k) {
    for (int j = 0; j + 1 < ny; ++j) {
      for (int i = 0; i + 1 < nx; ++i) {
        int cube = 0;
        bool observed = true;
        for (int c = 0; c < 8; ++c) {
          const std::size_t idx = grid.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (!weights.empty() && weights[idx] <= 0.0) observed = false;
          if (values[idx] < iso) cube |= 1 << c;
        }
        if (!observed || detail::kEdgeTable[cube] == 0) continue;
        std::array<std::uint32_t, 12> vid{};
        for (int e = 0; e < 12; ++e) {
          if (!(detail::kEdgeTable[cube] & (1 << e))) continue;
          const auto& ca = kCorner[kEdge[e][0]];
          const auto& cb = kCorner[kEdge[e][1]];
          vid[e] = vertex_on_edge({i + ca[0], j + ca[1], k + ca[2]},
                                  {i + cb[0], j + cb[1], k + cb[2]});
        }
        const auto& tri = detail::kTriTable[cube];
        for (int t = 0; t < 16 && tri[t] >= 0; t += 3) {
          // The table winds counter-clockwise when viewed from the inside;
          // swap two corners so normals face the positive side.
          mesh.triangles.push_back({vid[tri[t]], vid[tri[t + 2]], vid[tri[t + 1]]});
        }
      }
    }
  }

  // Drop zero-area triangles, then unreferenced vertices.
  std::vector<Triangle> kept;
  kept.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
    const Vec3& a = mesh.vertices[t[0]];
    if ((mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a).squaredNorm() == 0.0) continue;
    kept.push_back(t);
  }
  std::vector<std::uint32_t> remap(mesh.vertices.size(), UINT32_MAX);
  std::vector<Vec3> verts;
  verts.reserve(mesh.vertices.size());
  for (auto& t : kept) {
    for (auto& idx : t) {
      if (remap[idx] == UINT32_MAX) {
        remap[idx] = static_cast<std::uint32_t>(verts.size());
        verts.push_back(mesh.vertices[idx]);
      }
      idx = remap[idx];
    }
  }
  mesh.vertices = std::move(verts);
  mesh.triangles = std::move(kept);
  return mesh;
}

}  // namespace resim
