#pragma once

#include "resim/geometry.hpp"
#include "resim/sdf_grid.hpp"

#include <span>

namespace resim {

/// Marching cubes over the grid nodes with linear interpolation of edge
/// crossings. Triangles wind so that their normals point toward increasing
/// SDF (outward). Vertices are shared between neighboring cells, zero-area
/// triangles are dropped and unreferenced vertices removed.
///
/// When `weights` is non-empty (same layout as the grid), cells with any
/// zero-weight corner are skipped; that is how unobserved TSDF space is kept
/// out of the mesh. A grid without a sign change yields an empty mesh and a
/// warning.
TriangleMesh extract_mesh(const SdfGrid& grid, double iso = 0.0,
                          std::span<const double> weights = {});

}  // namespace resim
