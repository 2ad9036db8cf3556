// Dense signed-distance grid with trilinear interpolation.
//
// Values live on grid nodes: node (i, j, k) sits at origin + voxel_size *
// (i, j, k). Storage is x-fastest. Sign convention: positive outside,
// negative inside.
#pragma once

#include "resim/geometry.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

namespace resim {

struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;
  std::array<int, 3> dims{2, 2, 2};

  std::size_t node_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  Vec3 max_corner() const {
    return origin + voxel_size * Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1);
  }
  double diagonal() const { return (max_corner() - origin).norm(); }

  /// Throws std::invalid_argument unless voxel_size > 0 and dims >= 2.
  void validate() const;

  /// Grid covering `box` padded by `padding` on every side.
  static GridSpec covering(const Aabb& box, double voxel_size, double padding);
};

class SdfGrid {
 public:
  SdfGrid() = default;
  SdfGrid(const GridSpec& spec, double fill);

  static SdfGrid from_function(const GridSpec& spec,
                               const std::function<double(const Vec3&)>& f);

  const GridSpec& spec() const { return spec_; }
  const Vec3& origin() const { return spec_.origin; }
  double voxel_size() const { return spec_.voxel_size; }
  const std::array<int, 3>& dims() const { return spec_.dims; }

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(spec_.dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(spec_.dims[1]) * k);
  }
  Vec3 node_position(int i, int j, int k) const {
    return spec_.origin + spec_.voxel_size * Vec3(i, j, k);
  }

  double at(int i, int j, int k) const { return values_[index(i, j, k)]; }
  double& at(int i, int j, int k) { return values_[index(i, j, k)]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  GridSpec spec_;
  std::vector<double> values_;
};

struct SdfSample {
  double value = 0.0;
  bool extrapolated = false;
};

/// Eight-node interpolation stencil. value(x) = sum_n weight[n] *
/// values[node[n]] + outside_distance, where outside_distance is the
/// Euclidean distance from x to the grid box (zero inside).
struct TrilinearStencil {
  std::array<std::size_t, 8> node{};
  std::array<double, 8> weight{};
  double outside_distance = 0.0;
  bool extrapolated = false;

  double evaluate(const std::vector<double>& values) const {
    double v = outside_distance;
    for (int n = 0; n < 8; ++n) v += weight[n] * values[node[n]];
    return v;
  }
};

TrilinearStencil trilinear_stencil(const GridSpec& spec, const Vec3& x);

/// Trilinear interpolation inside the grid. Outside, the query is clamped to
/// the grid box and the distance to the box is added to the clamped value.
SdfSample sample_sdf(const SdfGrid& grid, const Vec3& x);

/// Binary grid file: text header (origin, voxel size, dims, sign tag) then
/// raw little-endian float64 values, x-fastest.
void write_sdf_grid(const SdfGrid& grid, const std::filesystem::path& path);
SdfGrid read_sdf_grid(const std::filesystem::path& path);

}  // namespace resim
