#include "resim/volume_render.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace resim;

namespace {

double phi(double x, double s) { return 1.0 / (1.0 + std::exp(-s * x)); }

double alpha_oracle(double a, double b, double s) {
  return std::max((phi(a, s) - phi(b, s)) / phi(a, s), 0.0);
}

SdfGrid plane_grid() {
  GridSpec spec;
  spec.origin = {-2, -2, -2};
  spec.voxel_size = 0.1;
  spec.dims = {41, 41, 81};
  return SdfGrid::from_function(spec, [](const Vec3& x) { return x.z(); });
}

SdfGrid sphere_grid(double radius) {
  GridSpec spec;
  spec.origin = {-6, -6, -6};
  spec.voxel_size = 0.1;
  spec.dims = {121, 121, 121};
  return SdfGrid::from_function(spec, [radius](const Vec3& x) { return x.norm() - radius; });
}

void check_invariants(const RaySampleSet& r) {
  const std::size_t k = r.depths.size();
  REQUIRE(r.alphas.size() == k);
  REQUIRE(r.transmittances.size() == k);
  CHECK(r.transmittances[0] == 1.0);
  double wsum = 0;
  for (std::size_t i = 0; i < k; ++i) {
    CHECK(r.alphas[i] >= 0.0);
    CHECK(r.alphas[i] <= 1.0);
    CHECK(r.transmittances[i] >= 0.0);
    CHECK(r.transmittances[i] <= 1.0);
    if (i + 1 < k) {
      CHECK(r.transmittances[i + 1] <= r.transmittances[i]);
      CHECK(r.transmittances[i + 1] ==
            doctest::Approx(r.transmittances[i] * (1.0 - r.alphas[i])).epsilon(1e-12));
      CHECK(r.depths[i + 1] > r.depths[i]);
    }
    wsum += r.transmittances[i] * r.alphas[i];
  }
  CHECK(wsum <= 1.0 + 1e-12);
  CHECK(r.opacity == doctest::Approx(wsum).epsilon(1e-9));
  CHECK(r.opacity >= 0.0);
  CHECK(r.opacity <= 1.0);
}

}  // namespace

TEST_CASE("alpha_from_sdf against the formula") {
  CHECK(alpha_from_sdf(0.3, 0.3, 10) == 0.0);
  const double a = alpha_from_sdf(-1, -2, 10);
  CHECK(a == doctest::Approx(alpha_oracle(-1, -2, 10)).epsilon(1e-12));
  CHECK(a == doctest::Approx(0.99995).epsilon(1e-5));
  CHECK(std::abs(alpha_from_sdf(0.5, -0.5, 100) - 1.0) < 1e-9);
  CHECK(alpha_from_sdf(-0.5, 0.5, 10) == 0.0);  // back-facing crossing is clamped
  test::Draws d(31);
  for (int i = 0; i < 500; ++i) {
    const double x = d.uniform(-2, 2), y = d.uniform(-2, 2), s = d.uniform(1, 50);
    const double v = alpha_from_sdf(x, y, s);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(alpha_oracle(x, y, s)).epsilon(1e-9));
  }
  // large |s x| must not overflow
  CHECK(std::isfinite(alpha_from_sdf(-50, -60, 1000)));
  CHECK(alpha_from_sdf(-50, -60, 1000) == doctest::Approx(1.0));
}

TEST_CASE("alpha partials match central differences") {
  test::Draws d(32);
  const double h = 1e-6;
  for (int i = 0; i < 200; ++i) {
    const double x = d.uniform(-1, 1), y = x - d.uniform(0.01, 0.5), s = d.uniform(2, 40);
    const auto p = alpha_with_partials(x, y, s);
    CHECK(p.alpha == doctest::Approx(alpha_from_sdf(x, y, s)).epsilon(1e-12));
    const double dx = (alpha_from_sdf(x + h, y, s) - alpha_from_sdf(x - h, y, s)) / (2 * h);
    const double dy = (alpha_from_sdf(x, y + h, s) - alpha_from_sdf(x, y - h, s)) / (2 * h);
    const double ds = (alpha_from_sdf(x, y, s + h) - alpha_from_sdf(x, y, s - h)) / (2 * h);
    CHECK(p.d_sdf_i == doctest::Approx(dx).epsilon(1e-5).scale(1e-3));
    CHECK(p.d_sdf_next == doctest::Approx(dy).epsilon(1e-5).scale(1e-3));
    CHECK(p.d_scale == doctest::Approx(ds).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("empty space renders nothing") {
  GridSpec spec;
  spec.origin = {-5, -5, -5};
  spec.voxel_size = 0.5;
  spec.dims = {21, 21, 21};
  const SdfGrid g(spec, 10.0);
  RenderConfig cfg;
  cfg.sigmoid_scale = 10;
  const auto r = render_depth(g, Vec3::Zero(), Vec3::UnitX(), cfg.resolved_for(spec));
  check_invariants(r);
  CHECK(r.opacity < 1e-12);
  CHECK(r.rendered_depth < 1e-9);
}

TEST_CASE("plane and sphere depths at k=512, s=200") {
  RenderConfig cfg;
  cfg.num_samples = 512;
  cfg.sigmoid_scale = 200;
  cfg.t_near = 0.0;
  {
    const SdfGrid g = plane_grid();
    cfg.t_far = 7.0;
    const auto r = render_depth(g, Vec3(0, 0, 5), Vec3(0, 0, -1), cfg);
    check_invariants(r);
    CHECK(std::abs(r.rendered_depth - 5.0) < 0.05);
  }
  {
    const SdfGrid g = sphere_grid(2.0);
    cfg.t_far = 8.0;
    const auto r = render_depth(g, Vec3(5, 0, 0), Vec3(-1, 0, 0), cfg);
    check_invariants(r);
    CHECK(std::abs(r.rendered_depth - 3.0) < 0.03);
    // off-axis ray with an analytic chord: |o + t d| = 2
    const Vec3 o(0, 4.5, 0.7);
    const Vec3 dir = Vec3(0.3, -1, -0.1).normalized();
    const double b = o.dot(dir);
    const double t_hit = -b - std::sqrt(b * b - (o.squaredNorm() - 4.0));
    const auto r2 = render_depth(g, o, dir, cfg);
    check_invariants(r2);
    CHECK(std::abs(r2.rendered_depth - t_hit) < 0.01 * t_hit);
  }
}

TEST_CASE("stratified depths stay in their bins and are reproducible") {
  RenderConfig cfg;
  cfg.num_samples = 16;
  cfg.t_near = 1.0;
  cfg.t_far = 5.0;
  cfg.stratified = true;
  cfg.seed = 9;
  const auto a = sample_depths(cfg, 3);
  CHECK(a == sample_depths(cfg, 3));
  CHECK(a != sample_depths(cfg, 4));
  const double bin = 4.0 / 16;
  for (int i = 0; i < 16; ++i) {
    CHECK(a[i] >= 1.0 + i * bin);
    CHECK(a[i] <= 1.0 + (i + 1) * bin);
  }
  cfg.stratified = false;
  const auto u = sample_depths(cfg, 0);
  CHECK(u.front() == 1.0);
  CHECK(u.back() == 5.0);
}

TEST_CASE("random rays through a sphere satisfy the sampling invariants") {
  const SdfGrid g = sphere_grid(1.5);
  RenderConfig cfg;
  cfg.num_samples = 96;
  cfg.sigmoid_scale = 30;
  cfg.stratified = true;
  cfg = cfg.resolved_for(g.spec());
  test::Draws d(33);
  for (int i = 0; i < 100; ++i) {
    const Vec3 o = d.vec(-4, 4);
    const Vec3 dir = d.vec(-1, 1).normalized();
    check_invariants(render_depth(g, o, dir, cfg, i));
  }
}

TEST_CASE("depth gradient wrt alphas matches differences of the sum") {
  test::Draws d(34);
  RaySampleSet r;
  const int k = 12;
  for (int i = 0; i < k; ++i) {
    r.depths.push_back(1.0 + 0.5 * i);
    r.alphas.push_back(i + 1 < k ? d.uniform(0, 0.6) : 0.0);
  }
  const auto depth_of = [&](const std::vector<double>& al) {
    double t = 1, dd = 0;
    for (int i = 0; i < k; ++i) {
      dd += t * al[i] * r.depths[i];
      t *= 1 - al[i];
    }
    return dd;
  };
  double t = 1;
  for (int i = 0; i < k; ++i) {
    r.transmittances.push_back(t);
    t *= 1 - r.alphas[i];
  }
  r.rendered_depth = depth_of(r.alphas);
  const auto grad = depth_alpha_gradient(r);
  const double h = 1e-7;
  for (int m = 0; m < k; ++m) {
    auto up = r.alphas, dn = r.alphas;
    up[m] += h;
    dn[m] -= h;
    CHECK(grad[m] == doctest::Approx((depth_of(up) - depth_of(dn)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("geometry_loss values") {
  CHECK(geometry_loss(3.0, 3.0, 1.0) == 0.0);
  CHECK(geometry_loss(std::exp(1.0) - 1.0, 0.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(geometry_loss(4.2, 5.0, 2.0) == doctest::Approx(2.0 * std::log(1.8)).epsilon(1e-14));
  CHECK(geometry_loss(5.0, 4.2, 2.0) == geometry_loss(4.2, 5.0, 2.0));
  CHECK_THROWS_AS(geometry_loss(NAN, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(geometry_loss(1.0, INFINITY, 1.0), std::invalid_argument);
  CHECK(geometry_loss_gradient(4.2, 5.0, 2.0) == doctest::Approx(-2.0 / 1.8));
  CHECK(geometry_loss_gradient(5.0, 5.0, 2.0) == 0.0);
  test::Draws d(35);
  for (int i = 0; i < 100; ++i) {
    const double a = d.uniform(0, 10), b = d.uniform(0, 10);
    CHECK(geometry_loss(a, b, 1.0) > 0.0);
  }
}

TEST_CASE("RenderConfig validation") {
  RenderConfig cfg;
  cfg.t_far = 10;
  CHECK_NOTHROW(cfg.validate());
  cfg.num_samples = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.num_samples = 8;
  cfg.sigmoid_scale = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.sigmoid_scale = 1;
  cfg.t_near = 11;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
