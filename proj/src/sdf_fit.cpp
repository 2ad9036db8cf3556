#include "resim/sdf_fit.hpp"

#include "resim/errors.hpp"
#include "resim/parallel.hpp"
#include "resim/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace resim {

void OptimizerConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("optimizer.epochs: must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("optimizer.batch_size: must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer.learning_rate: must be > 0");
  if (!(scale_min > 0.0) || !(scale_min <= scale_max)) {
    throw std::invalid_argument("optimizer.scale_min: need 0 < scale_min <= scale_max");
  }
  if (lambda_smooth < 0.0 || lambda_eik < 0.0) {
    throw std::invalid_argument("optimizer.lambda_smooth/lambda_eik: regularizer weights must be >= 0");
  }
}

double mean_data_loss(const SdfGrid& grid, std::span<const LidarRay> rays,
                      const RenderConfig& cfg, int threads) {
  if (rays.empty()) return 0.0;
  std::vector<double> loss(rays.size());
  parallel_for(rays.size(), threads, [&](std::size_t i) {
    const auto s = render_depth(grid, rays[i], cfg, i);
    loss[i] = geometry_loss(s.rendered_depth, rays[i].measured_depth, rays[i].weight);
  });
  return std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(rays.size());
}

double smoothness_term(const SdfGrid& grid, std::vector<double>* d_values, double scale) {
  const auto [nx, ny, nz] = grid.dims();
  if (nx < 3 || ny < 3 || nz < 3) return 0.0;
  const auto& v = grid.values();
  const double inv_h2 = 1.0 / (grid.voxel_size() * grid.voxel_size());
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(nx);
  const std::size_t sz = sy * static_cast<std::size_t>(ny);
  const double count = static_cast<double>(nx - 2) * (ny - 2) * (nz - 2);
  double sum = 0.0;
  for (int k = 1; k < nz - 1; ++k) {
    for (int j = 1; j < ny - 1; ++j) {
      std::size_t c = grid.index(1, j, k);
      for (int i = 1; i < nx - 1; ++i, ++c) {
        const double lap = (v[c + sx] + v[c - sx] + v[c + sy] + v[c - sy] + v[c + sz] +
                            v[c - sz] - 6.0 * v[c]) * inv_h2;
        sum += lap * lap;
        if (d_values) {
          const double g = scale * 2.0 * lap * inv_h2 / count;
          auto& d = *d_values;
          d[c + sx] += g;
          d[c - sx] += g;
          d[c + sy] += g;
          d[c - sy] += g;
          d[c + sz] += g;
          d[c - sz] += g;
          d[c] -= 6.0 * g;
        }
      }
    }
  }
  return sum / count;
}

double eikonal_term(const SdfGrid& grid, std::vector<double>* d_values, double scale) {
  const auto [nx, ny, nz] = grid.dims();
  const auto& v = grid.values();
  const double inv_h = 1.0 / grid.voxel_size();
  const std::size_t sy = static_cast<std::size_t>(nx);
  const std::size_t sz = sy * static_cast<std::size_t>(ny);
  const double count = static_cast<double>(nx - 1) * (ny - 1) * (nz - 1);
  constexpr double kEps2 = 1e-24;
  double sum = 0.0;
  for (int k = 0; k < nz - 1; ++k) {
    for (int j = 0; j < ny - 1; ++j) {
      std::size_t c = grid.index(0, j, k);
      for (int i = 0; i < nx - 1; ++i, ++c) {
        const double gx = (v[c + 1] - v[c]) * inv_h;
        const double gy = (v[c + sy] - v[c]) * inv_h;
        const double gz = (v[c + sz] - v[c]) * inv_h;
        const double norm = std::sqrt(gx * gx + gy * gy + gz * gz + kEps2);
        const double r = norm - 1.0;
        sum += r * r;
        if (d_values) {
          const double f = scale * 2.0 * r / norm * inv_h / count;
          auto& d = *d_values;
          d[c + 1] += f * gx;
          d[c + sy] += f * gy;
          d[c + sz] += f * gz;
          d[c] -= f * (gx + gy + gz);
        }
      }
    }
  }
  return sum / count;
}

ObjectiveGradient evaluate_objective(const SdfGrid& grid, std::span<const LidarRay> rays,
                                     const RenderConfig& cfg, const OptimizerConfig& opt,
                                     std::span<const std::uint64_t> ray_keys) {
  if (!ray_keys.empty() && ray_keys.size() != rays.size()) {
    throw std::invalid_argument("evaluate_objective: ray_keys length mismatch");
  }
  const std::size_t n = rays.size();
  const std::size_t k = static_cast<std::size_t>(cfg.num_samples);
  const double inv_n = n ? 1.0 / static_cast<double>(n) : 0.0;
  auto key_of = [&](std::size_t i) -> std::uint64_t { return ray_keys.empty() ? i : ray_keys[i]; };

  // Per-ray results land in fixed slots; the scatter below walks them in ray
  // order.
  std::vector<double> loss(n, 0.0);
  std::vector<double> d_sdf(n * k, 0.0);
  std::vector<double> d_scale(n, 0.0);
  parallel_for(n, opt.threads, [&](std::size_t r) {
    const LidarRay& ray = rays[r];
    const auto s = render_depth(grid, ray, cfg, key_of(r));
    loss[r] = geometry_loss(s.rendered_depth, ray.measured_depth, ray.weight);
    const double g = geometry_loss_gradient(s.rendered_depth, ray.measured_depth, ray.weight) * inv_n;
    if (g == 0.0) return;
    const auto d_alpha = depth_alpha_gradient(s);
    double* ds = d_sdf.data() + r * k;
    for (std::size_t m = 0; m + 1 < k; ++m) {
      const auto p = alpha_with_partials(s.sdf_values[m], s.sdf_values[m + 1], cfg.sigmoid_scale);
      const double up = g * d_alpha[m];
      ds[m] += up * p.d_sdf_i;
      ds[m + 1] += up * p.d_sdf_next;
      d_scale[r] += up * p.d_scale;
    }
  });

  ObjectiveGradient out;
  out.d_values.assign(grid.values().size(), 0.0);
  double data = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    data += loss[r];
    out.d_scale += d_scale[r];
    const double* ds = d_sdf.data() + r * k;
    if (std::all_of(ds, ds + k, [](double x) { return x == 0.0; })) continue;
    const auto t = sample_depths(cfg, key_of(r));
    for (std::size_t m = 0; m < k; ++m) {
      if (ds[m] == 0.0) continue;
      const auto st = trilinear_stencil(grid.spec(), rays[r].origin + t[m] * rays[r].direction);
      for (int c = 0; c < 8; ++c) out.d_values[st.node[c]] += st.weight[c] * ds[m];
    }
  }
  out.terms.data = data * inv_n;
  if (opt.lambda_smooth > 0.0) {
    out.terms.smoothness = smoothness_term(grid, &out.d_values, opt.lambda_smooth);
  }
  if (opt.lambda_eik > 0.0) {
    out.terms.eikonal = eikonal_term(grid, &out.d_values, opt.lambda_eik);
  }
  out.terms.total = out.terms.data + opt.lambda_smooth * out.terms.smoothness +
                    opt.lambda_eik * out.terms.eikonal;
  return out;
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, const CounterRng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.bits(i) % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

FitResult fit_sdf(std::span<const LidarRay> rays, const SdfGrid& init,
                  const RenderConfig& render, const OptimizerConfig& opt) {
  if (rays.empty()) throw std::invalid_argument("fit_sdf: empty ray bundle");
  opt.validate();
  RenderConfig cfg = render.resolved_for(init.spec());
  cfg.sigmoid_scale = std::clamp(cfg.sigmoid_scale, opt.scale_min, opt.scale_max);
  cfg.validate();

  FitResult result;
  result.grid = init;
  auto& values = result.grid.values();
  const std::size_t n_values = values.size();
  std::vector<double> m1(n_values, 0.0), m2(n_values, 0.0);
  double s_m1 = 0.0, s_m2 = 0.0;
  long step = 0;

  result.initial_loss = mean_data_loss(result.grid, rays, cfg, opt.threads);
  if (!std::isfinite(result.initial_loss)) {
    throw NumericalError("fit_sdf: initial loss is not finite");
  }

  const std::size_t n = rays.size();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(opt.batch_size), n);
  std::vector<LidarRay> batch_rays;
  std::vector<std::uint64_t> batch_keys;
  double ema = 0.0;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double progress = opt.epochs > 1 ? static_cast<double>(epoch) / (opt.epochs - 1) : 0.0;
    const double lr_factor =
        opt.final_lr_fraction + (1.0 - opt.final_lr_fraction) * 0.5 * (1.0 + std::cos(kPi * progress));
    const double lr = opt.learning_rate * lr_factor;
    const double lr_s = opt.scale_learning_rate * lr_factor;
    const auto order = shuffled(n, CounterRng(opt.seed, static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;

    for (std::size_t b0 = 0, bi = 0; b0 < n; b0 += batch, ++bi) {
      const std::size_t b1 = std::min(n, b0 + batch);
      batch_rays.clear();
      batch_keys.clear();
      for (std::size_t i = b0; i < b1; ++i) {
        batch_rays.push_back(rays[order[i]]);
        batch_keys.push_back(hash_combine(static_cast<std::uint64_t>(epoch), order[i]));
      }
      const auto grad = evaluate_objective(result.grid, batch_rays, cfg, opt, batch_keys);
      if (!std::isfinite(grad.terms.total)) {
        std::ostringstream msg;
        msg << "fit_sdf diverged: non-finite loss at epoch " << epoch << ", batch " << bi
            << " (rays " << b0 << ".." << b1 - 1 << " of the shuffled order)";
        throw NumericalError(msg.str());
      }
      epoch_loss += grad.terms.data * static_cast<double>(b1 - b0);

      ++step;
      const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
      bool finite = true;
      for (std::size_t i = 0; i < n_values; ++i) {
        const double g = grad.d_values[i];
        m1[i] = opt.beta1 * m1[i] + (1.0 - opt.beta1) * g;
        m2[i] = opt.beta2 * m2[i] + (1.0 - opt.beta2) * g * g;
        values[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + opt.adam_epsilon);
        finite = finite && std::isfinite(values[i]);
      }
      if (!finite) {
        std::ostringstream msg;
        msg << "fit_sdf diverged: non-finite voxel update at epoch " << epoch << ", batch " << bi;
        throw NumericalError(msg.str());
      }
      if (opt.learn_scale) {
        const double g = grad.d_scale;
        s_m1 = opt.beta1 * s_m1 + (1.0 - opt.beta1) * g;
        s_m2 = opt.beta2 * s_m2 + (1.0 - opt.beta2) * g * g;
        cfg.sigmoid_scale -= lr_s * (s_m1 / c1) / (std::sqrt(s_m2 / c2) + opt.adam_epsilon);
        cfg.sigmoid_scale = std::clamp(cfg.sigmoid_scale, opt.scale_min, opt.scale_max);
      }
    }
    epoch_loss /= static_cast<double>(n);
    result.loss_trace.push_back(epoch_loss);
    ema = epoch == 0 ? epoch_loss : opt.trace_smoothing * ema + (1.0 - opt.trace_smoothing) * epoch_loss;
    result.smoothed_trace.push_back(ema);
  }

  result.sigmoid_scale = cfg.sigmoid_scale;
  result.final_loss = mean_data_loss(result.grid, rays, cfg, opt.threads);
  return result;
}

}  // namespace resim
