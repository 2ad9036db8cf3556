#include "resim/sdf_grid.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace resim;

namespace {

GridSpec spec_of(Vec3 origin, double voxel, int nx, int ny, int nz) {
  GridSpec s;
  s.origin = origin;
  s.voxel_size = voxel;
  s.dims = {nx, ny, nz};
  return s;
}

}  // namespace

TEST_CASE("sample_sdf returns node values and edge midpoints") {
  const GridSpec spec = spec_of({-1, 0.5, 2}, 0.25, 5, 4, 3);
  test::Draws d(21);
  SdfGrid g(spec, 0.0);
  for (auto& v : g.values()) v = d.uniform(-3, 3);
  for (int k = 0; k < 3; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 5; ++i) {
        const auto s = sample_sdf(g, g.node_position(i, j, k));
        CHECK(s.value == doctest::Approx(g.at(i, j, k)).epsilon(1e-12));
        CHECK_FALSE(s.extrapolated);
      }
  const Vec3 mid = 0.5 * (g.node_position(1, 2, 1) + g.node_position(2, 2, 1));
  CHECK(sample_sdf(g, mid).value ==
        doctest::Approx(0.5 * (g.at(1, 2, 1) + g.at(2, 2, 1))).epsilon(1e-12));
}

TEST_CASE("trilinear interpolation reproduces affine functions") {
  const GridSpec spec = spec_of({-2, -1, 0.3}, 0.17, 12, 9, 7);
  const auto f = [](const Vec3& x) { return x.x() + 2 * x.y() + 3 * x.z(); };
  const SdfGrid g = SdfGrid::from_function(spec, f);
  test::Draws d(22);
  const Vec3 hi = spec.max_corner();
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x(d.uniform(spec.origin.x(), hi.x()), d.uniform(spec.origin.y(), hi.y()),
                 d.uniform(spec.origin.z(), hi.z()));
    CHECK(std::abs(sample_sdf(g, x).value - f(x)) < 1e-9);
  }
}

TEST_CASE("queries outside the grid add the distance to the box") {
  const GridSpec spec = spec_of({0, 0, 0}, 1.0, 3, 3, 3);
  SdfGrid g(spec, 0.5);
  const auto s = sample_sdf(g, Vec3(5, 2, 1));
  CHECK(s.extrapolated);
  CHECK(s.value == doctest::Approx(0.5 + 3.0));
  const auto c = sample_sdf(g, Vec3(-3, -4, 1));
  CHECK(c.value == doctest::Approx(0.5 + 5.0));
}

TEST_CASE("stencil weights form a partition of unity") {
  const GridSpec spec = spec_of({1, 2, 3}, 0.3, 6, 6, 6);
  test::Draws d(23);
  for (int i = 0; i < 200; ++i) {
    const auto st = trilinear_stencil(spec, d.vec(0, 5));
    double w = 0;
    for (double x : st.weight) {
      CHECK(x >= 0.0);
      w += x;
    }
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("GridSpec validation and covering") {
  CHECK_THROWS_AS(spec_of({0, 0, 0}, 0.0, 3, 3, 3).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of({0, 0, 0}, 1.0, 1, 3, 3).validate(), std::invalid_argument);
  Aabb box;
  box.min = {-1, -2, 0};
  box.max = {3, 1, 0.5};
  const GridSpec c = GridSpec::covering(box, 0.1, 0.5);
  CHECK(c.origin.x() <= -1.5 + 1e-12);
  CHECK(c.max_corner().x() >= 3.5 - 1e-12);
  CHECK(c.max_corner().z() >= 1.0 - 1e-12);
}

TEST_CASE("grid files round trip bit-exactly") {
  const auto dir = test::tmp_dir("sdf_grid_io");
  const GridSpec spec = spec_of({-1.25, 0.125, 3}, 0.05, 7, 5, 4);
  test::Draws d(24);
  SdfGrid g(spec, 0.0);
  for (auto& v : g.values()) v = d.normal();
  write_sdf_grid(g, dir / "g.sdf");
  const SdfGrid back = read_sdf_grid(dir / "g.sdf");
  CHECK(back.dims() == g.dims());
  CHECK(back.origin() == g.origin());
  CHECK(back.voxel_size() == g.voxel_size());
  CHECK(back.values() == g.values());

  std::ofstream(dir / "junk.sdf") << "not a grid\n";
  CHECK_THROWS(read_sdf_grid(dir / "junk.sdf"));
}
