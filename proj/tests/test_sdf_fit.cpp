#include "resim/errors.hpp"
#include "resim/sdf_fit.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace resim;

namespace {

GridSpec cube_spec(double half, double voxel) {
  GridSpec s;
  s.origin = Vec3::Constant(-half);
  s.voxel_size = voxel;
  const int n = static_cast<int>(std::lround(2 * half / voxel)) + 1;
  s.dims = {n, n, n};
  return s;
}

// Rays from a ring of viewpoints onto a sphere of the given radius.
std::vector<LidarRay> sphere_rays(double radius, int count, std::uint64_t seed) {
  test::Draws d(seed);
  std::vector<LidarRay> rays;
  while (static_cast<int>(rays.size()) < count) {
    const double a = d.uniform(-kPi, kPi);
    const Vec3 o(3.2 * std::cos(a), 3.2 * std::sin(a), d.uniform(-0.5, 0.5));
    const Vec3 target = d.vec(-1, 1).normalized() * radius;
    const Vec3 dir = (target - o).normalized();
    const double b = o.dot(dir);
    const double disc = b * b - (o.squaredNorm() - radius * radius);
    if (disc <= 0) continue;
    LidarRay r;
    r.origin = o;
    r.direction = dir;
    r.measured_depth = -b - std::sqrt(disc);
    rays.push_back(r);
  }
  return rays;
}

double smoothness_oracle(const SdfGrid& g) {
  const auto [nx, ny, nz] = g.dims();
  const double h2 = g.voxel_size() * g.voxel_size();
  double sum = 0;
  int count = 0;
  for (int k = 1; k + 1 < nz; ++k)
    for (int j = 1; j + 1 < ny; ++j)
      for (int i = 1; i + 1 < nx; ++i) {
        const double lap = (g.at(i + 1, j, k) + g.at(i - 1, j, k) + g.at(i, j + 1, k) +
                            g.at(i, j - 1, k) + g.at(i, j, k + 1) + g.at(i, j, k - 1) -
                            6 * g.at(i, j, k)) / h2;
        sum += lap * lap;
        ++count;
      }
  return sum / count;
}

double eikonal_oracle(const SdfGrid& g) {
  const auto [nx, ny, nz] = g.dims();
  const double h = g.voxel_size();
  double sum = 0;
  int count = 0;
  for (int k = 0; k + 1 < nz; ++k)
    for (int j = 0; j + 1 < ny; ++j)
      for (int i = 0; i + 1 < nx; ++i) {
        const Vec3 grad((g.at(i + 1, j, k) - g.at(i, j, k)) / h,
                        (g.at(i, j + 1, k) - g.at(i, j, k)) / h,
                        (g.at(i, j, k + 1) - g.at(i, j, k)) / h);
        sum += (grad.norm() - 1) * (grad.norm() - 1);
        ++count;
      }
  return sum / count;
}

}  // namespace

TEST_CASE("regularizers match a brute-force evaluation") {
  test::Draws d(41);
  SdfGrid g(cube_spec(1.0, 0.25), 0.0);
  for (auto& v : g.values()) v = d.normal();
  CHECK(smoothness_term(g, nullptr) == doctest::Approx(smoothness_oracle(g)).epsilon(1e-12));
  CHECK(eikonal_term(g, nullptr) == doctest::Approx(eikonal_oracle(g)).epsilon(1e-12));
  const SdfGrid plane = SdfGrid::from_function(cube_spec(1.0, 0.25), [](const Vec3& x) { return x.z(); });
  CHECK(smoothness_term(plane, nullptr) < 1e-20);
  CHECK(eikonal_term(plane, nullptr) < 1e-20);
}

TEST_CASE("analytic gradient matches central differences on 20 voxels") {
  const GridSpec spec = cube_spec(3.5, 0.25);
  test::Draws d(42);
  SdfGrid g = SdfGrid::from_function(spec, [](const Vec3& x) { return x.norm() - 1.5; });
  for (auto& v : g.values()) v += 0.05 * d.normal();
  const auto rays = sphere_rays(1.5, 60, 43);
  RenderConfig cfg;
  cfg.num_samples = 48;
  cfg.t_near = 0.3;
  cfg.t_far = 4.0;
  cfg.sigmoid_scale = 8.0;
  cfg.stratified = true;
  cfg.seed = 5;
  OptimizerConfig opt;
  const auto full = evaluate_objective(g, rays, cfg, opt);

  std::vector<std::size_t> touched;
  for (std::size_t i = 0; i < full.d_values.size(); ++i) {
    if (std::abs(full.d_values[i]) > 1e-7) touched.push_back(i);
  }
  REQUIRE(touched.size() > 100);
  const double h = 1e-4;
  int checked = 0;
  double worst = 0;
  for (int n = 0; n < 20; ++n) {
    const std::size_t idx =
        touched[static_cast<std::size_t>(d.uniform(0, 1) * touched.size()) % touched.size()];
    SdfGrid up = g, dn = g;
    up.values()[idx] += h;
    dn.values()[idx] -= h;
    const double fd = (evaluate_objective(up, rays, cfg, opt).terms.total -
                       evaluate_objective(dn, rays, cfg, opt).terms.total) / (2 * h);
    const double rel = std::abs(fd - full.d_values[idx]) /
                       std::max(std::abs(fd), std::abs(full.d_values[idx]));
    worst = std::max(worst, rel);
    ++checked;
  }
  CHECK(checked == 20);
  CHECK(worst < 1e-4);

  RenderConfig up = cfg, dn = cfg;
  up.sigmoid_scale += h;
  dn.sigmoid_scale -= h;
  const double fd_s = (evaluate_objective(g, rays, up, opt).terms.total -
                       evaluate_objective(g, rays, dn, opt).terms.total) / (2 * h);
  CHECK(full.d_scale == doctest::Approx(fd_s).epsilon(1e-4));
}

TEST_CASE("gradients do not depend on the thread count") {
  const GridSpec spec = cube_spec(3.5, 0.25);
  const SdfGrid g = SdfGrid::from_function(spec, [](const Vec3& x) { return x.norm() - 1.5; });
  const auto rays = sphere_rays(1.5, 200, 44);
  RenderConfig cfg;
  cfg.num_samples = 32;
  cfg.t_far = 4.0;
  OptimizerConfig one, four;
  four.threads = 4;
  const auto a = evaluate_objective(g, rays, cfg, one);
  const auto b = evaluate_objective(g, rays, cfg, four);
  CHECK(a.terms.total == b.terms.total);
  CHECK(a.d_scale == b.d_scale);
  CHECK(a.d_values == b.d_values);
}

TEST_CASE("a plane fit started at the plane stays there") {
  const GridSpec spec = cube_spec(3.0, 0.25);
  const SdfGrid plane = SdfGrid::from_function(spec, [](const Vec3& x) { return x.z(); });
  test::Draws d(45);
  std::vector<LidarRay> rays;
  for (int i = 0; i < 300; ++i) {
    LidarRay r;
    r.origin = Vec3(d.uniform(-1, 1), d.uniform(-1, 1), 2.0);
    const Vec3 hit(d.uniform(-2, 2), d.uniform(-2, 2), 0.0);
    r.measured_depth = (hit - r.origin).norm();
    r.direction = (hit - r.origin) / r.measured_depth;
    rays.push_back(r);
  }
  RenderConfig cfg;
  cfg.num_samples = 96;
  cfg.t_far = 5.0;
  cfg.sigmoid_scale = 60;
  OptimizerConfig opt;
  opt.epochs = 15;
  opt.batch_size = 100;
  const auto res = fit_sdf(rays, plane, cfg, opt);
  CHECK(res.initial_loss < 0.05);
  CHECK(res.final_loss <= res.initial_loss + 1e-6);
}

TEST_CASE("a sphere fit from a constant grid reduces the smoothed loss") {
  const GridSpec spec = cube_spec(3.5, 0.25);
  const SdfGrid init(spec, 1.0);
  const auto rays = sphere_rays(1.5, 2000, 46);
  RenderConfig cfg;
  cfg.num_samples = 64;
  cfg.t_far = 6.0;
  OptimizerConfig opt;
  opt.epochs = 120;
  opt.batch_size = 500;
  opt.learning_rate = 0.05;
  opt.seed = 3;
  const auto res = fit_sdf(rays, init, cfg, opt);
  REQUIRE(res.smoothed_trace.size() == 120);
  CHECK(res.smoothed_trace.back() <= 0.3 * res.smoothed_trace.front());
  CHECK(res.final_loss < res.initial_loss);

  // same seed, same result
  const auto again = fit_sdf(rays, init, cfg, opt);
  CHECK(again.grid.values() == res.grid.values());
  CHECK(again.loss_trace == res.loss_trace);
}

TEST_CASE("fit_sdf input checks") {
  const SdfGrid init(cube_spec(1.0, 0.5), 1.0);
  RenderConfig cfg;
  cfg.t_far = 2;
  OptimizerConfig opt;
  CHECK_THROWS_AS(fit_sdf({}, init, cfg, opt), std::invalid_argument);
  opt.epochs = 0;
  CHECK_THROWS_AS(opt.validate(), std::invalid_argument);
  opt.epochs = 3;
  opt.learning_rate = 1e308;
  const auto rays = sphere_rays(0.5, 20, 47);
  opt.learn_scale = false;
  // a huge step sends the voxel values to infinity
  CHECK_THROWS_AS(fit_sdf(rays, init, cfg, opt), NumericalError);
}
