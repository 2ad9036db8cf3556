// Core geometric types shared by every stage of the pipeline.
//
// Conventions: right-handed frame, x forward, y left, z up. Yaw rotates about
// +z. A 6D pose maps to a rotation with intrinsic Z-Y-X order,
// R = Rz(yaw) * Ry(pitch) * Rx(roll). Pose replay results depend on this
// choice, so do not change it without regenerating reference outputs.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace resim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

inline constexpr double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
inline constexpr double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

/// Position in meters plus roll/yaw/pitch in radians.
///
/// Field order follows the (x, y, z, roll, yaw, pitch) layout used by label
/// files and tracks. Use make_pose() to get wrapped angles.
struct Pose6D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double roll = 0.0;
  double yaw = 0.0;
  double pitch = 0.0;

  bool is_finite() const;
  Vec3 position() const { return {x, y, z}; }
  bool operator==(const Pose6D&) const = default;
};

Pose6D make_pose(double x, double y, double z, double roll, double yaw,
                 double pitch);

/// Componentwise difference / sum with wrapped angles.
Pose6D pose_difference(const Pose6D& a, const Pose6D& b);
Pose6D pose_sum(const Pose6D& a, const Pose6D& b);

class RigidTransform {
 public:
  RigidTransform() = default;
  RigidTransform(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static RigidTransform identity() { return {}; }
  static RigidTransform translation_only(const Vec3& t) {
    return {Mat3::Identity(), t};
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }
  Vec3 operator()(const Vec3& p) const { return apply(p); }

  RigidTransform inverse() const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Throws std::invalid_argument for non-finite components.
RigidTransform pose_to_transform(const Pose6D& pose);

/// Inverse of pose_to_transform for rotations away from gimbal lock.
Pose6D transform_to_pose(const RigidTransform& transform);

/// compose(a, b)(p) == a(b(p)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

enum class PointSource : std::uint8_t { Top = 0, Side = 1 };

/// Point set with optional per-point attributes. An attribute vector is
/// either empty (absent) or exactly as long as `points`.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<float> intensity;
  std::vector<std::int32_t> beam_id;
  std::vector<std::int32_t> azimuth_step;
  std::vector<double> azimuth;
  std::vector<double> range;
  std::vector<PointSource> source;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  bool has_intensity() const { return !intensity.empty(); }
  bool has_beam_id() const { return !beam_id.empty(); }
  bool has_azimuth_step() const { return !azimuth_step.empty(); }
  bool has_azimuth() const { return !azimuth.empty(); }
  bool has_range() const { return !range.empty(); }
  bool has_source() const { return !source.empty(); }

  /// True when every present attribute matches the point count.
  bool attributes_consistent() const;

  /// Copies the selected points together with their attributes.
  PointCloud subset(std::span<const std::size_t> indices) const;

  /// Appends `other`. Attributes present on only one side are filled with
  /// defaults so that the result stays consistent.
  void append(const PointCloud& other);

  /// Applies `t` to every point in place.
  void transform(const RigidTransform& t);
};

using Triangle = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;

  bool empty() const { return triangles.empty(); }

  /// Throws std::invalid_argument when an index is out of range.
  void validate() const;

  double surface_area() const;

  /// Appends `other`, offsetting its indices.
  void append(const TriangleMesh& other);

  void transform(const RigidTransform& t);
};

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool valid() const { return (min.array() <= max.array()).all(); }
  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    min = min.cwiseMin(b.min);
    max = max.cwiseMax(b.max);
  }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

Aabb bounds_of(std::span<const Vec3> points);

}  // namespace resim
