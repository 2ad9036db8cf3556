// Turning a posed LiDAR sequence into a consolidated static cloud and a
// weighted ray bundle for depth supervision.
//
// Order of operations for a sequence: remove_dynamic_points per frame, then
// register_frames, then filter_outliers on the consolidated cloud, then
// build_ray_bundle on the cleaned frames.
#pragma once

#include "resim/geometry.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace resim {

enum class ObjectClass { Vehicle, Pedestrian, Cyclist, Other };

std::string_view to_string(ObjectClass c);
/// Case-insensitive; also accepts "Car" for Vehicle.
std::optional<ObjectClass> parse_object_class(std::string_view name);

/// Coordinate frame that a label's center/yaw are expressed in.
enum class LabelFrame { Sensor, World };

struct BoxLabel {
  ObjectClass class_name = ObjectClass::Vehicle;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // length (x), width (y), height (z)
  double yaw = 0.0;
  int frame_index = 0;
  bool is_dynamic = false;
  LabelFrame frame = LabelFrame::Sensor;

  /// Closed oriented-box containment (boundary counts as inside).
  bool contains(const Vec3& p) const;
};

struct Frame {
  PointCloud cloud;     // sensor coordinates
  Pose6D sensor_pose;   // sensor-to-world
  double timestamp = 0.0;
  int frame_index = 0;
};

struct LidarRay {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();  // unit norm
  double measured_depth = 0.0;
  double weight = 1.0;
  PointSource source = PointSource::Top;

  Vec3 endpoint() const { return origin + measured_depth * direction; }
};

struct RayBundle {
  std::vector<LidarRay> rays;
  std::size_t skipped_zero_range = 0;
};

inline constexpr std::size_t kDefaultOutlierNeighbors = 16;
inline constexpr double kDefaultOutlierSigma = 2.0;
inline constexpr double kDefaultSideWeight = 4.0;

/// Drops every point inside a dynamic box. Boxes must be expressed in the
/// sensor frame like the cloud; world-frame boxes are rejected with
/// std::invalid_argument. Non-dynamic boxes are ignored.
PointCloud remove_dynamic_points(const Frame& frame, std::span<const BoxLabel> boxes);

/// Transform mapping frame-local sensor coordinates into the reference frame
/// (the sensor frame of `reference`): inverse(pose_ref) * pose.
RigidTransform to_reference(const Pose6D& reference, const Pose6D& pose);

/// Stitches all frames into the coordinate system of the first frame (lowest
/// frame_index). Output is ordered by frame_index and always carries the
/// `source` attribute (Top when the input has none). Throws
/// std::invalid_argument on an empty sequence or duplicate frame indices.
PointCloud register_frames(std::span<const Frame> frames);

/// Statistical outlier removal: a point is dropped when the mean distance to
/// its k nearest neighbors exceeds global_mean + sigma_mult * global_std.
/// Clouds with k points or fewer are returned unchanged.
PointCloud filter_outliers(const PointCloud& cloud,
                           std::size_t k = kDefaultOutlierNeighbors,
                           double sigma_mult = kDefaultOutlierSigma);

/// Indices of the points filter_outliers keeps, ascending.
std::vector<std::size_t> outlier_inliers(const PointCloud& cloud,
                           std::size_t k = kDefaultOutlierNeighbors,
                           double sigma_mult = kDefaultOutlierSigma);

/// One ray per point, expressed in the reference frame. Points at the sensor
/// origin are skipped and counted. Side-LiDAR points get `side_weight`.
RayBundle build_ray_bundle(std::span<const Frame> frames,
                           double side_weight = kDefaultSideWeight);

// --- file formats -----------------------------------------------------------

/// Label file: one box per line,
/// `class cx cy cz length width height yaw dynamic_flag`. Lines starting
/// with '#' and blank lines are skipped. Labels are sensor-frame.
/// Throws std::runtime_error naming file:line on malformed input.
std::vector<BoxLabel> read_labels(const std::filesystem::path& path, int frame_index = 0);
void write_labels(std::span<const BoxLabel> labels, const std::filesystem::path& path);

struct ManifestEntry {
  std::filesystem::path cloud;
  Pose6D pose;
  std::optional<std::filesystem::path> labels;
  double timestamp = 0.0;
  int frame_index = 0;
};

/// JSON manifest: {"frames": [{"cloud": "...", "pose": [x,y,z,roll,yaw,pitch],
/// "labels": "...", "timestamp": t}, ...]}. Relative paths resolve against
/// the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(std::span<const ManifestEntry> entries, const std::filesystem::path& path);

struct LoadedSequence {
  std::vector<Frame> frames;
  std::vector<std::vector<BoxLabel>> labels;  // per frame, possibly empty
};

LoadedSequence load_sequence(const std::filesystem::path& manifest_path);

}  // namespace resim
