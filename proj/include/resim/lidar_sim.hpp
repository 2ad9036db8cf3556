// Virtual spinning LiDAR: beam layouts, sensor presets and scan casting
// against a triangle mesh.
//
// Angles: elevation theta is measured from the horizontal plane (positive
// up), azimuth phi about +z from +x. A return at range r sits at
// r * (cos theta cos phi, cos theta sin phi, sin theta) in the sensor frame.
#pragma once

#include "resim/bvh.hpp"
#include "resim/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace resim {

struct SensorProfile {
  std::string name;
  int channels = 32;
  double vfov_min_deg = -30.0;
  double vfov_max_deg = 10.0;
  double hfov_min_deg = -180.0;
  double hfov_max_deg = 180.0;
  double rotation_rate_hz = 10.0;
  double points_per_second = 600000.0;
  double max_range = 100.0;
  double drop_rate = 0.0;
  double range_noise_sigma = 0.0;
  Pose6D mount;  // sensor in the vehicle frame
  std::optional<std::vector<double>> elevation_override_deg;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;

  /// Firing positions per full rotation:
  /// round(points_per_second / rotation_rate / channels), at least 1.
  int azimuth_steps_per_rotation() const;
  double azimuth_step_rad() const;

  /// Azimuth angles (radians) actually fired inside [hfov_min, hfov_max).
  std::vector<double> azimuths() const;
};

/// Elevation angles in radians, one per channel: the override when present,
/// otherwise evenly spaced over the vFoV including both ends (a single
/// channel sits at the midpoint).
std::vector<double> beam_pattern(const SensorProfile& profile);

Vec3 spherical_to_point(double elevation, double azimuth, double range);

struct SimulatedScan {
  /// World-frame points with beam_id, azimuth_step, azimuth and range.
  PointCloud cloud;
  std::size_t rays_cast = 0;
  std::size_t dropped_count = 0;
  std::size_t miss_count = 0;
};

/// Casts one full rotation. The sensor sits at platform_pose composed with
/// profile.mount. Each hit range gets Gaussian noise, is clamped to
/// [0, max_range], and is then dropped with probability drop_rate. Noise and
/// drop draws are keyed by (seed, ray index), so the scan is identical for
/// any thread count. Output is ordered by (channel, azimuth step).
SimulatedScan cast_scan(const Bvh& scene, const SensorProfile& profile,
                        const Pose6D& platform_pose, std::uint64_t seed, int threads = 1);

/// Known names: waymo-top, waymo-side, kitti, nuscenes, carla-default-32.
/// Throws NotFoundError listing the valid names otherwise.
SensorProfile preset(std::string_view name);
std::vector<std::string> preset_names();

/// The four perimeter units (front, rear, left, right) sharing the
/// waymo-side beam layout.
std::vector<SensorProfile> waymo_side_profiles();

/// JSON profile file. Keys mirror the SensorProfile fields (angles in
/// degrees, mount as [x, y, z, roll, yaw, pitch]); an optional "base" key
/// names a preset to start from. Unknown keys are rejected.
SensorProfile load_profile(const std::filesystem::path& path);
void save_profile(const SensorProfile& profile, const std::filesystem::path& path);

/// Preset name or path to a profile file.
SensorProfile resolve_profile(const std::string& name_or_path);

/// Elevation (radians) of a sensor-frame point.
double elevation_of(const Vec3& sensor_point);

}  // namespace resim
