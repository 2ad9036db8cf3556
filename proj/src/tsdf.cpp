#include "resim/tsdf.hpp"

#include "resim/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace resim {

void tsdf_integrate_ray(TsdfVolume& volume, const Vec3& origin, const Vec3& endpoint,
                        const TsdfConfig& cfg) {
  const Vec3 delta = endpoint - origin;
  const double depth = delta.norm();
  if (!(depth > 0.0)) return;
  const Vec3 dir = delta / depth;
  const auto& spec = volume.grid.spec();
  const double h = spec.voxel_size;
  const double trunc = cfg.truncation_distance;
  const double t0 = std::max(0.0, depth - trunc);
  const double t1 = depth + trunc;

  // Voxel (i, j, k) is the cube of side h centered on node (i, j, k).
  const Vec3 start = (origin + t0 * dir - spec.origin) / h + Vec3::Constant(0.5);
  std::array<int, 3> cell{};
  std::array<int, 3> step{};
  std::array<double, 3> t_max{};
  std::array<double, 3> t_delta{};
  for (int a = 0; a < 3; ++a) {
    cell[a] = static_cast<int>(std::floor(start[a]));
    const double da = dir[a] / h;  // cells per meter along the ray
    if (da > 0.0) {
      step[a] = 1;
      t_max[a] = t0 + (cell[a] + 1 - start[a]) / da;
      t_delta[a] = 1.0 / da;
    } else if (da < 0.0) {
      step[a] = -1;
      t_max[a] = t0 + (cell[a] - start[a]) / da;
      t_delta[a] = -1.0 / da;
    } else {
      step[a] = 0;
      t_max[a] = std::numeric_limits<double>::infinity();
      t_delta[a] = std::numeric_limits<double>::infinity();
    }
  }

  auto& values = volume.grid.values();
  auto& weights = volume.weights;
  double t = t0;
  while (t <= t1) {
    const bool inside = cell[0] >= 0 && cell[1] >= 0 && cell[2] >= 0 &&
                        cell[0] < spec.dims[0] && cell[1] < spec.dims[1] &&
                        cell[2] < spec.dims[2];
    if (inside) {
      const Vec3 node = volume.grid.node_position(cell[0], cell[1], cell[2]);
      double sdf = depth - (node - origin).dot(dir);
      if (sdf >= -trunc) {
        sdf = std::min(sdf, trunc);
        const std::size_t idx = volume.grid.index(cell[0], cell[1], cell[2]);
        const double w = weights[idx];
        values[idx] = (values[idx] * w + sdf) / (w + 1.0);
        weights[idx] = std::min(w + 1.0, cfg.max_weight);
      }
    }
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    t = t_max[axis];
    cell[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
}

TsdfVolume tsdf_fuse(std::span<const Frame> frames, const GridSpec& spec, const TsdfConfig& cfg) {
  spec.validate();
  if (cfg.truncation_distance < 2.0 * spec.voxel_size) {
    warn("tsdf: truncation_distance is below two voxels; the surface band may have holes");
  }
  TsdfVolume volume{SdfGrid(spec, cfg.truncation_distance),
                    std::vector<double>(spec.node_count(), 0.0)};
  if (frames.empty()) return volume;

  std::vector<const Frame*> order;
  for (const auto& f : frames) order.push_back(&f);
  std::stable_sort(order.begin(), order.end(),
                   [](const Frame* a, const Frame* b) { return a->frame_index < b->frame_index; });
  const Pose6D& ref = order.front()->sensor_pose;
  for (const Frame* f : order) {
    const RigidTransform t = to_reference(ref, f->sensor_pose);
    const Vec3 origin = t.translation();
    for (const auto& p : f->cloud.points) tsdf_integrate_ray(volume, origin, t.apply(p), cfg);
  }
  return volume;
}

}  // namespace resim
