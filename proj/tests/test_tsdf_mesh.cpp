#include "resim/mesh_extraction.hpp"
#include "resim/tsdf.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <map>

using namespace resim;

namespace {

GridSpec box_spec(const Vec3& lo, const Vec3& hi, double voxel) {
  GridSpec s;
  s.origin = lo;
  s.voxel_size = voxel;
  for (int a = 0; a < 3; ++a) s.dims[a] = static_cast<int>(std::lround((hi[a] - lo[a]) / voxel)) + 1;
  return s;
}

Vec3 face_normal(const TriangleMesh& m, const Triangle& t) {
  return (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
}

// Frames that look at a sphere at the origin from six directions. Points are
// exact ray-sphere intersections, in each sensor's frame.
std::vector<Frame> sphere_scans(double radius) {
  std::vector<Frame> frames;
  const Vec3 eyes[6] = {{6, 0, 0.5}, {-6, 0, 0.5}, {0, 6, -0.5}, {0, -6, 0.5}, {0.5, 0.5, 6}, {0.5, -0.5, -6}};
  for (int f = 0; f < 6; ++f) {
    Frame fr;
    fr.frame_index = f;
    fr.sensor_pose = make_pose(eyes[f].x(), eyes[f].y(), eyes[f].z(), 0, 0, 0);
    for (int i = 0; i < 120; ++i) {
      for (int j = 0; j < 120; ++j) {
        const Vec3 aim(-eyes[f].x() + (i - 60) * 0.04, -eyes[f].y() + (j - 60) * 0.04,
                       -eyes[f].z() + (i - j) * 0.02);
        const Vec3 dir = aim.normalized();
        const double b = eyes[f].dot(dir);
        const double disc = b * b - (eyes[f].squaredNorm() - radius * radius);
        if (disc <= 0) continue;
        fr.cloud.points.push_back((-b - std::sqrt(disc)) * dir);
      }
    }
    frames.push_back(fr);
  }
  return frames;
}

}  // namespace

TEST_CASE("a single ray writes a signed band around its endpoint") {
  const GridSpec spec = box_spec({0, -1, -1}, {7, 1, 1}, 0.1);
  Frame f;
  f.cloud.points.push_back({5, 0, 0});
  TsdfConfig cfg;
  cfg.truncation_distance = 0.3;
  const auto vol = tsdf_fuse(std::span(&f, 1), spec, cfg);
  const auto& g = vol.grid;
  const int j = 10, k = 10;
  CHECK(g.node_position(50, j, k).isApprox(Vec3(5, 0, 0)));
  CHECK(std::abs(g.at(50, j, k)) < 1e-9);
  CHECK(g.at(49, j, k) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(g.at(52, j, k) == doctest::Approx(-0.2).epsilon(1e-9));
  CHECK(g.at(47, j, k) == doctest::Approx(0.3));
  CHECK(vol.weights[g.index(50, j, k)] == 1.0);
  // nodes behind the band and away from the ray are untouched
  CHECK(vol.weights[g.index(60, j, k)] == 0.0);
  CHECK(g.at(60, j, k) == 0.3);
  CHECK(vol.weights[g.index(50, j + 3, k)] == 0.0);
}

TEST_CASE("repeated rays average and cap their weight") {
  const GridSpec spec = box_spec({0, -1, -1}, {7, 1, 1}, 0.1);
  TsdfVolume vol{SdfGrid(spec, 0.3), std::vector<double>(spec.node_count(), 0.0)};
  TsdfConfig cfg;
  cfg.max_weight = 3;
  tsdf_integrate_ray(vol, Vec3::Zero(), Vec3(5, 0, 0), cfg);
  tsdf_integrate_ray(vol, Vec3::Zero(), Vec3(5.1, 0, 0), cfg);
  const std::size_t at5 = vol.grid.index(50, 10, 10);
  CHECK(vol.grid.values()[at5] == doctest::Approx(0.05));
  for (int i = 0; i < 10; ++i) tsdf_integrate_ray(vol, Vec3::Zero(), Vec3(5, 0, 0), cfg);
  CHECK(vol.weights[at5] == 3.0);
}

TEST_CASE("no frames leave the grid at +truncation") {
  const GridSpec spec = box_spec({0, 0, 0}, {1, 1, 1}, 0.25);
  TsdfConfig cfg;
  cfg.truncation_distance = 0.7;
  const auto vol = tsdf_fuse({}, spec, cfg);
  for (double v : vol.grid.values()) CHECK(v == 0.7);
  for (double w : vol.weights) CHECK(w == 0.0);
  CHECK(extract_mesh(vol.grid, 0.0, vol.weights).empty());
}

TEST_CASE("fused sphere scans put the surface within a voxel of the radius") {
  const double radius = 2.0, voxel = 0.1;
  const auto frames = sphere_scans(radius);
  // fused coordinates are those of the first sensor
  const Vec3 center = -Vec3(frames[0].sensor_pose.x, frames[0].sensor_pose.y, frames[0].sensor_pose.z);
  const GridSpec spec = box_spec(center - Vec3::Constant(3), center + Vec3::Constant(3), voxel);
  TsdfConfig cfg;
  cfg.truncation_distance = 0.3;
  const auto vol = tsdf_fuse(frames, spec, cfg);
  const auto mesh = extract_mesh(vol.grid, 0.0, vol.weights);
  REQUIRE(mesh.vertices.size() > 500);
  for (const auto& v : mesh.vertices) CHECK(std::abs((v - center).norm() - radius) <= voxel);
}

TEST_CASE("marching cubes on an analytic sphere") {
  const GridSpec spec = box_spec({-4, -4, -4}, {4, 4, 4}, 0.1);
  const SdfGrid g = SdfGrid::from_function(spec, [](const Vec3& x) { return x.norm() - 3.0; });
  const auto mesh = extract_mesh(g);
  REQUIRE_FALSE(mesh.empty());
  CHECK_NOTHROW(mesh.validate());
  for (const auto& v : mesh.vertices) {
    CHECK(v.norm() >= 2.8);
    CHECK(v.norm() <= 3.2);
    CHECK(std::abs(sample_sdf(g, v).value) < 0.1);
  }
  // outward: normals agree with the radial direction
  std::size_t outward = 0;
  for (const auto& t : mesh.triangles) {
    const Vec3 c = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    if (face_normal(mesh, t).dot(c) > 0) ++outward;
  }
  CHECK(outward == mesh.triangles.size());
  CHECK(mesh.surface_area() == doctest::Approx(4 * kPi * 9).epsilon(0.02));
  // closed surface: every edge is shared by exactly two triangles
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const auto a = t[e], b = t[(e + 1) % 3];
      edges[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  for (const auto& [edge, n] : edges) CHECK(n == 2);
}

TEST_CASE("marching cubes on a plane and on a surface-free grid") {
  const GridSpec spec = box_spec({-1, -1.5, -0.95}, {1, 1.5, 1.05}, 0.1);
  const SdfGrid plane = SdfGrid::from_function(spec, [](const Vec3& x) { return x.z(); });
  const auto mesh = extract_mesh(plane);
  REQUIRE_FALSE(mesh.empty());
  for (const auto& v : mesh.vertices) CHECK(std::abs(v.z()) <= 0.1);
  CHECK(mesh.surface_area() == doctest::Approx(2.0 * 3.0).epsilon(0.05));
  for (const auto& t : mesh.triangles) CHECK(face_normal(mesh, t).z() > 0);

  const SdfGrid positive(spec, 1.0);
  CHECK(extract_mesh(positive).empty());
}

TEST_CASE("a non-zero iso level offsets the surface") {
  const GridSpec spec = box_spec({-3, -3, -3}, {3, 3, 3}, 0.1);
  const SdfGrid g = SdfGrid::from_function(spec, [](const Vec3& x) { return x.norm() - 1.5; });
  const auto mesh = extract_mesh(g, 0.5);
  for (const auto& v : mesh.vertices) CHECK(std::abs(v.norm() - 2.0) < 0.1);
}

TEST_CASE("zero-weight cells are skipped") {
  const GridSpec spec = box_spec({-1, -1, -1}, {1, 1, 1}, 0.1);
  const SdfGrid plane = SdfGrid::from_function(spec, [](const Vec3& x) { return x.z() + 0.05; });
  std::vector<double> w(spec.node_count(), 1.0);
  // knock out every node with x > 0
  for (int k = 0; k < spec.dims[2]; ++k)
    for (int j = 0; j < spec.dims[1]; ++j)
      for (int i = 0; i < spec.dims[0]; ++i)
        if (plane.node_position(i, j, k).x() > 1e-9) w[plane.index(i, j, k)] = 0.0;
  const auto full = extract_mesh(plane);
  const auto half = extract_mesh(plane, 0.0, w);
  CHECK(half.surface_area() == doctest::Approx(0.5 * full.surface_area()).epsilon(1e-9));
  for (const auto& v : half.vertices) CHECK(v.x() <= 1e-9);
}
