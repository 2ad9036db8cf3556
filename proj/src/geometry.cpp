#include "resim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace resim {

double wrap_angle(double radians) {
  if (!std::isfinite(radians)) return radians;
  if (radians > -kPi && radians <= kPi) return radians;
  // One turn off, the common case for differences and sums of wrapped angles.
  if (radians > kPi && radians <= 3.0 * kPi) return radians - 2.0 * kPi;
  if (radians <= -kPi && radians > -3.0 * kPi) return radians + 2.0 * kPi;
  double r = std::fmod(radians + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  r -= kPi;
  // fmod maps pi to -pi; the range is (-pi, pi].
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

bool Pose6D::is_finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) &&
         std::isfinite(roll) && std::isfinite(yaw) && std::isfinite(pitch);
}

Pose6D make_pose(double x, double y, double z, double roll, double yaw,
                 double pitch) {
  return {x, y, z, wrap_angle(roll), wrap_angle(yaw), wrap_angle(pitch)};
}

Pose6D pose_difference(const Pose6D& a, const Pose6D& b) {
  return make_pose(a.x - b.x, a.y - b.y, a.z - b.z, a.roll - b.roll,
                   a.yaw - b.yaw, a.pitch - b.pitch);
}

Pose6D pose_sum(const Pose6D& a, const Pose6D& b) {
  return make_pose(a.x + b.x, a.y + b.y, a.z + b.z, a.roll + b.roll,
                   a.yaw + b.yaw, a.pitch + b.pitch);
}

RigidTransform RigidTransform::inverse() const {
  Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

RigidTransform pose_to_transform(const Pose6D& pose) {
  if (!pose.is_finite()) {
    throw std::invalid_argument("pose_to_transform: non-finite pose component");
  }
  const Mat3 rz = Eigen::AngleAxisd(pose.yaw, Vec3::UnitZ()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(pose.pitch, Vec3::UnitY()).toRotationMatrix();
  const Mat3 rx = Eigen::AngleAxisd(pose.roll, Vec3::UnitX()).toRotationMatrix();
  return {rz * ry * rx, pose.position()};
}

Pose6D transform_to_pose(const RigidTransform& transform) {
  const Mat3& r = transform.rotation();
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const Vec3& t = transform.translation();
  return make_pose(t.x(), t.y(), t.z(), roll, yaw, pitch);
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation() * b.rotation(),
          a.rotation() * b.translation() + a.translation()};
}

bool PointCloud::attributes_consistent() const {
  const std::size_t n = points.size();
  auto ok = [n](const auto& v) { return v.empty() || v.size() == n; };
  return ok(intensity) && ok(beam_id) && ok(azimuth_step) && ok(azimuth) &&
         ok(range) && ok(source);
}

namespace {

template <typename T>
void copy_selected(const std::vector<T>& from, std::span<const std::size_t> idx,
                   std::vector<T>& to) {
  if (from.empty()) return;
  to.reserve(idx.size());
  for (std::size_t i : idx) to.push_back(from[i]);
}

template <typename T>
void append_attribute(std::vector<T>& dst, std::size_t dst_count,
                      const std::vector<T>& src, std::size_t src_count,
                      T fill) {
  if (dst.empty() && src.empty()) return;
  if (dst.empty()) dst.assign(dst_count, fill);
  if (src.empty()) {
    dst.insert(dst.end(), src_count, fill);
  } else {
    dst.insert(dst.end(), src.begin(), src.end());
  }
}

}  // namespace

PointCloud PointCloud::subset(std::span<const std::size_t> indices) const {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(points.at(i));
  copy_selected(intensity, indices, out.intensity);
  copy_selected(beam_id, indices, out.beam_id);
  copy_selected(azimuth_step, indices, out.azimuth_step);
  copy_selected(azimuth, indices, out.azimuth);
  copy_selected(range, indices, out.range);
  copy_selected(source, indices, out.source);
  return out;
}

void PointCloud::append(const PointCloud& other) {
  const std::size_t n = points.size();
  const std::size_t m = other.points.size();
  append_attribute(intensity, n, other.intensity, m, 0.0f);
  append_attribute(beam_id, n, other.beam_id, m, std::int32_t{-1});
  append_attribute(azimuth_step, n, other.azimuth_step, m, std::int32_t{-1});
  append_attribute(azimuth, n, other.azimuth, m, 0.0);
  append_attribute(range, n, other.range, m, 0.0);
  append_attribute(source, n, other.source, m, PointSource::Top);
  points.insert(points.end(), other.points.begin(), other.points.end());
}

void PointCloud::transform(const RigidTransform& t) {
  for (auto& p : points) p = t.apply(p);
}

void TriangleMesh::validate() const {
  const auto nv = vertices.size();
  for (const auto& tri : triangles) {
    for (auto idx : tri) {
      if (idx >= nv) {
        throw std::invalid_argument("TriangleMesh: vertex index out of range");
      }
    }
  }
}

double TriangleMesh::surface_area() const {
  double area = 0.0;
  for (const auto& t : triangles) {
    const Vec3& a = vertices[t[0]];
    area += 0.5 * (vertices[t[1]] - a).cross(vertices[t[2]] - a).norm();
  }
  return area;
}

void TriangleMesh::append(const TriangleMesh& other) {
  const auto offset = static_cast<std::uint32_t>(vertices.size());
  vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
  triangles.reserve(triangles.size() + other.triangles.size());
  for (const auto& t : other.triangles) {
    triangles.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
  }
}

void TriangleMesh::transform(const RigidTransform& t) {
  for (auto& v : vertices) v = t.apply(v);
}

Aabb bounds_of(std::span<const Vec3> points) {
  Aabb box;
  for (const auto& p : points) box.extend(p);
  return box;
}

}  // namespace resim
