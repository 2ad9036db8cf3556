// Analytic meshes and signed distances for synthetic scenes and tests.
#pragma once

#include "resim/geometry.hpp"

#include <vector>

namespace resim {

/// Axis-aligned box with outward-facing triangles (12 triangles).
TriangleMesh make_box(const Vec3& min_corner, const Vec3& max_corner);

/// Box of size (l, w, h) standing on the origin: x in [-l/2, l/2],
/// y in [-w/2, w/2], z in [0, h].
TriangleMesh make_grounded_box(const Vec3& size);

/// Horizontal square at height z facing +z, split into cells x cells.
TriangleMesh make_plane(double half_extent, double z, int cells);

/// Subdivided icosahedron projected onto the sphere.
TriangleMesh make_icosphere(const Vec3& center, double radius, int subdivisions);

struct BoxShape {
  Vec3 min_corner;
  Vec3 max_corner;
};

struct SphereShape {
  Vec3 center;
  double radius;
};

/// Ground plane z = 0 of half extent `ground_half_extent` with boxes and
/// spheres resting on or above it.
struct SyntheticScene {
  double ground_half_extent = 10.0;
  std::vector<BoxShape> boxes;
  std::vector<SphereShape> spheres;

  TriangleMesh mesh(int ground_cells = 20, int sphere_subdivisions = 4) const;

  /// Signed distance (positive outside) of the union: half-space below the
  /// ground, boxes and spheres. The ground is treated as infinite.
  double signed_distance(const Vec3& p) const;
};

/// Ground 20 x 20 m, three boxes and one sphere.
SyntheticScene demo_scene();

double box_signed_distance(const BoxShape& box, const Vec3& p);

}  // namespace resim
