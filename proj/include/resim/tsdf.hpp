// Truncated signed-distance fusion: the explicit baseline reconstruction.
#pragma once

#include "resim/ingest.hpp"
#include "resim/sdf_grid.hpp"

#include <span>
#include <vector>

namespace resim {

struct TsdfConfig {
  double truncation_distance = 0.3;
  double max_weight = 64.0;
};

struct TsdfVolume {
  SdfGrid grid;
  /// Integration weight per node; zero marks a node no ray has touched.
  std::vector<double> weights;
};

/// Fuses frames in the coordinate system of the first frame. For every point,
/// the nodes whose voxels the sensor ray crosses within truncation_distance
/// of the endpoint receive the projective signed distance (endpoint depth
/// minus the node's depth along the ray, clamped to +-truncation), averaged
/// with a running weight capped at max_weight. Untouched nodes hold
/// +truncation_distance.
///
/// Emits a warning when truncation_distance < 2 * voxel_size.
TsdfVolume tsdf_fuse(std::span<const Frame> frames, const GridSpec& spec, const TsdfConfig& cfg);

/// Single-ray update, exposed for callers that stream rays themselves.
void tsdf_integrate_ray(TsdfVolume& volume, const Vec3& origin, const Vec3& endpoint,
                        const TsdfConfig& cfg);

}  // namespace resim
