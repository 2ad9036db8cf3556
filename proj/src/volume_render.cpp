#include "resim/volume_render.hpp"

#include "resim/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace resim {

void RenderConfig::validate() const {
  if (num_samples < 2) throw std::invalid_argument("render.num_samples: must be >= 2");
  if (!(sigmoid_scale > 0.0)) throw std::invalid_argument("render.sigmoid_scale: must be > 0");
  if (!(t_near >= 0.0) || !(t_near < t_far)) {
    throw std::invalid_argument("render.t_near: need 0 <= t_near < t_far");
  }
}

RenderConfig RenderConfig::resolved_for(const GridSpec& grid) const {
  RenderConfig out = *this;
  if (out.t_far <= 0.0) out.t_far = grid.diagonal();
  return out;
}

double log_sigmoid(double x) {
  return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

namespace {

// 1 - Phi(x) = Phi(-x)
double sigmoid(double x) { return std::exp(log_sigmoid(x)); }

}  // namespace

AlphaPartials alpha_with_partials(double sdf_i, double sdf_next, double scale) {
  const double a = scale * sdf_i;
  const double b = scale * sdf_next;
  const double ratio = std::exp(log_sigmoid(b) - log_sigmoid(a));  // Phi(b) / Phi(a)
  const double raw = 1.0 - ratio;
  AlphaPartials out;
  if (raw < 0.0) return out;
  out.alpha = std::min(raw, 1.0);
  const double ca = sigmoid(-a);
  const double cb = sigmoid(-b);
  out.d_sdf_i = ratio * scale * ca;
  out.d_sdf_next = -ratio * scale * cb;
  out.d_scale = -ratio * (sdf_next * cb - sdf_i * ca);
  return out;
}

double alpha_from_sdf(double sdf_i, double sdf_next, double scale) {
  const double raw =
      1.0 - std::exp(log_sigmoid(scale * sdf_next) - log_sigmoid(scale * sdf_i));
  return std::clamp(raw, 0.0, 1.0);
}

std::vector<double> sample_depths(const RenderConfig& cfg, std::uint64_t ray_key) {
  const int k = cfg.num_samples;
  std::vector<double> t(static_cast<std::size_t>(k));
  const double span = cfg.t_far - cfg.t_near;
  if (cfg.stratified) {
    const CounterRng rng(cfg.seed, ray_key);
    const double bin = span / k;
    for (int i = 0; i < k; ++i) t[i] = cfg.t_near + (i + rng.uniform(i)) * bin;
  } else {
    const double step = span / (k - 1);
    for (int i = 0; i < k; ++i) t[i] = cfg.t_near + i * step;
    t[k - 1] = cfg.t_far;
  }
  return t;
}

RaySampleSet render_depth(const SdfGrid& grid, const Vec3& origin, const Vec3& direction,
                          const RenderConfig& cfg, std::uint64_t ray_key) {
  cfg.validate();
  RaySampleSet out;
  out.depths = sample_depths(cfg, ray_key);
  const std::size_t k = out.depths.size();
  out.sdf_values.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.sdf_values[i] = sample_sdf(grid, origin + out.depths[i] * direction).value;
  }
  out.alphas.assign(k, 0.0);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    out.alphas[i] = alpha_from_sdf(out.sdf_values[i], out.sdf_values[i + 1], cfg.sigmoid_scale);
  }
  out.transmittances.resize(k);
  double trans = 1.0;
  double depth = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    out.transmittances[i] = trans;
    depth += trans * out.alphas[i] * out.depths[i];
    trans *= 1.0 - out.alphas[i];
  }
  out.rendered_depth = depth;
  out.opacity = 1.0 - trans;
  return out;
}

RaySampleSet render_depth(const SdfGrid& grid, const LidarRay& ray, const RenderConfig& cfg,
                          std::uint64_t ray_key) {
  return render_depth(grid, ray.origin, ray.direction, cfg, ray_key);
}

std::vector<double> depth_alpha_gradient(const RaySampleSet& s) {
  const std::size_t k = s.depths.size();
  std::vector<double> grad(k, 0.0);
  double suffix = 0.0;  // U_m
  for (std::size_t m = k; m-- > 0;) {
    grad[m] = s.transmittances[m] * (s.depths[m] - suffix);
    suffix = s.alphas[m] * s.depths[m] + (1.0 - s.alphas[m]) * suffix;
  }
  return grad;
}

double geometry_loss(double rendered, double measured, double weight) {
  if (!std::isfinite(rendered) || !std::isfinite(measured) || !std::isfinite(weight)) {
    throw std::invalid_argument("geometry_loss: non-finite input");
  }
  return weight * std::log(std::abs(rendered - measured) + 1.0);
}

double geometry_loss_gradient(double rendered, double measured, double weight) {
  const double r = rendered - measured;
  if (r == 0.0) return 0.0;
  return weight * (r > 0.0 ? 1.0 : -1.0) / (std::abs(r) + 1.0);
}

}  // namespace resim
