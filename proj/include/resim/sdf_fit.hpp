// Fitting an SDF grid to a LiDAR ray bundle by gradient descent on the
// rendered-depth loss.
//
// Objective for a mini-batch B:
//
//   L = (1/|B|) sum_{r in B} w_r ln(|D(r) - D_meas(r)| + 1)
//     + lambda_smooth * mean_interior(Laplacian(v)^2)
//     + lambda_eik    * mean_cells((|grad v| - 1)^2)
//
// Gradients are exact: the chain runs from the loss through the rendered
// depth, the per-sample alphas, the trilinear stencils and into the voxel
// values (and optionally the sigmoid scale). Updates use Adam.
#pragma once

#include "resim/ingest.hpp"
#include "resim/sdf_grid.hpp"
#include "resim/volume_render.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace resim {

struct OptimizerConfig {
  int epochs = 200;
  int batch_size = 1024;
  double learning_rate = 0.02;
  /// Learning rate at the final epoch as a fraction of `learning_rate`
  /// (cosine schedule).
  double final_lr_fraction = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lambda_smooth = 0.1;
  double lambda_eik = 0.01;
  bool learn_scale = true;
  double scale_learning_rate = 0.5;
  double scale_min = 1.0;
  double scale_max = 1000.0;
  /// Decay of the exponential moving average reported in smoothed_trace.
  double trace_smoothing = 0.8;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct FitResult {
  SdfGrid grid;
  double sigmoid_scale = kDefaultSigmoidScale;
  /// Mean data loss per epoch, measured on each batch before its update.
  std::vector<double> loss_trace;
  /// Exponential moving average of loss_trace, seeded with its first entry.
  std::vector<double> smoothed_trace;
  /// Mean data loss over the whole bundle before and after fitting.
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct ObjectiveTerms {
  double data = 0.0;
  double smoothness = 0.0;
  double eikonal = 0.0;
  double total = 0.0;
};

struct ObjectiveGradient {
  ObjectiveTerms terms;
  std::vector<double> d_values;  // same layout as the grid values
  double d_scale = 0.0;
};

/// Mean weighted geometry loss of `rays` against `grid`.
double mean_data_loss(const SdfGrid& grid, std::span<const LidarRay> rays,
                      const RenderConfig& cfg, int threads = 1);

/// Objective value and exact gradient for one batch. `ray_keys` (same
/// length as `rays`, or empty for 0..n-1) seeds stratified sampling.
/// Accumulation happens in ray order, so results are bitwise independent of
/// `threads`.
ObjectiveGradient evaluate_objective(const SdfGrid& grid, std::span<const LidarRay> rays,
                                     const RenderConfig& cfg, const OptimizerConfig& opt,
                                     std::span<const std::uint64_t> ray_keys = {});

/// Unweighted regularizer means. When `d_values` is non-null, `scale` times
/// the gradient is added into it.
double smoothness_term(const SdfGrid& grid, std::vector<double>* d_values, double scale = 1.0);
double eikonal_term(const SdfGrid& grid, std::vector<double>* d_values, double scale = 1.0);

/// Runs the optimizer. `render.sigmoid_scale` is the starting scale.
/// Throws NumericalError naming the epoch and batch when the loss or an
/// update becomes non-finite; throws std::invalid_argument on an empty
/// bundle.
FitResult fit_sdf(std::span<const LidarRay> rays, const SdfGrid& init,
                  const RenderConfig& render, const OptimizerConfig& opt);

}  // namespace resim
