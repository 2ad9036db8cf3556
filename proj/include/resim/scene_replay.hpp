// Replaying tracked traffic participants inside a reconstructed background.
//
// Poses follow the label-difference form: the ego offset at frame t is the
// componentwise difference L_t - L_0, and an object's replay pose is its
// ego-relative pose plus that offset, with angles wrapped to (-pi, pi].
// PoseUpdate::Rigid swaps both steps for proper transform composition.
#pragma once

#include "resim/geometry.hpp"
#include "resim/ingest.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace resim {

/// Mesh in its own frame with the ground-contact point (bottom center) at
/// the origin, x along the length.
struct Asset {
  std::string asset_id;
  ObjectClass class_name = ObjectClass::Vehicle;
  Vec3 size = Vec3::Ones();
  TriangleMesh mesh;

  /// Throws std::invalid_argument on non-positive sizes or a mesh whose
  /// bounding box is off the declared size by more than 5%.
  void validate() const;
};

struct TrackedObject {
  std::string object_id;
  ObjectClass class_name = ObjectClass::Vehicle;
  Vec3 size = Vec3::Ones();
  std::map<int, Pose6D> relative_poses;  // frame -> pose relative to ego
};

struct EgoTrack {
  std::map<int, Pose6D> poses;  // frame -> world pose
};

enum class PoseUpdate { Componentwise, Rigid };

/// Throws NotFoundError when frame 0 or t is missing.
Pose6D ego_pose_at(const EgoTrack& ego, int t, PoseUpdate mode = PoseUpdate::Componentwise);
Pose6D target_pose_at(const TrackedObject& object, const EgoTrack& ego, int t,
                      PoseUpdate mode = PoseUpdate::Componentwise);

struct AffineParam {
  double scale = 1.0;
  double offset = 0.0;
};

/// Per class, affine maps for length, width and height.
struct SizeMap {
  std::map<ObjectClass, std::array<AffineParam, 3>> classes;

  void validate() const;
};

inline constexpr double kMinMappedSize = 0.1;

/// a * x + b per dimension, clamped below at kMinMappedSize. Classes absent
/// from the map pass through unchanged with a warning.
Vec3 map_size(const Vec3& size, ObjectClass class_name, const SizeMap& map);

/// Moment matching per class and dimension: the mapped source sizes get the
/// target's mean and (population) standard deviation. Classes missing from
/// either side are left out. A constant source dimension gets scale 1.
SizeMap fit_size_map(std::span<const BoxLabel> source, std::span<const BoxLabel> target);

/// Closest asset of the class in (l, w, h), ties to the smaller asset_id.
/// Throws NotFoundError listing the classes that are available.
const Asset& match_asset(std::span<const Asset> library, ObjectClass class_name,
                         const Vec3& size);

struct Placement {
  std::string object_id;
  Asset asset;
  Pose6D pose;  // pose of the ground-contact point
  Vec3 size = Vec3::Ones();
};

/// Background plus every placed asset, scaled per axis to its size and
/// moved to its pose. Background geometry comes first, then placements in
/// the given order.
TriangleMesh compose_frame(const TriangleMesh& background, std::span<const Placement> placements);

/// Label lines `class l w h cx cy cz yaw`, one per placement, sorted by
/// object_id, in the frame of `sensor_pose`. (cx, cy, cz) is the bottom
/// center of the box; yaw is the heading relative to the sensor. The text
/// starts with a comment line naming the frame.
std::string export_labels(std::span<const Placement> placements, int frame,
                          const Pose6D& sensor_pose);

struct ExportedLabel {
  ObjectClass class_name = ObjectClass::Vehicle;
  Vec3 size = Vec3::Ones();
  Vec3 bottom_center = Vec3::Zero();
  double yaw = 0.0;
};

/// Reads export_labels output. Throws InputError naming file:line.
std::vector<ExportedLabel> read_exported_labels(const std::filesystem::path& path);

// --- libraries and tracks ---------------------------------------------------

/// Box-primitive assets covering typical sizes for every class.
std::vector<Asset> default_asset_library();

/// JSON: {"assets": [{"id", "class", "size": [l, w, h], "mesh": "a.ply"}]}.
/// "mesh" is optional; without it a box of the declared size is used.
std::vector<Asset> read_asset_manifest(const std::filesystem::path& path);

/// Track file. Each object starts with `object ID CLASS L W H` and is
/// followed by `t x y z roll yaw pitch` lines. '#' starts a comment.
std::vector<TrackedObject> read_tracks(const std::filesystem::path& path);
void write_tracks(std::span<const TrackedObject> objects, const std::filesystem::path& path);

/// Ego file: `t x y z roll yaw pitch` lines.
EgoTrack read_ego_track(const std::filesystem::path& path);
void write_ego_track(const EgoTrack& ego, const std::filesystem::path& path);

/// JSON: {"vehicle": {"length": [a, b], "width": [a, b], "height": [a, b]}}.
SizeMap read_size_map(const std::filesystem::path& path);
void write_size_map(const SizeMap& map, const std::filesystem::path& path);

}  // namespace resim
