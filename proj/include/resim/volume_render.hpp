// Depth rendering of a LiDAR ray through an SDF grid.
//
// Along a ray, k depths t_1 < ... < t_k are sampled in [t_near, t_far]. Each
// consecutive pair of SDF samples (S_i, S_{i+1}) is turned into an opacity
//
//   alpha_i = max((Phi_s(S_i) - Phi_s(S_{i+1})) / Phi_s(S_i), 0),
//   Phi_s(x) = 1 / (1 + exp(-s x)),
//
// and the expected depth is D = sum_i T_i alpha_i t_i with transmittance
// T_i = prod_{j<i} (1 - alpha_j). The last sample has no successor, so
// alpha_k = 0. No normalization by opacity is applied; callers that need to
// detect empty rays should look at `opacity`.
#pragma once

#include "resim/ingest.hpp"
#include "resim/sdf_grid.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace resim {

inline constexpr int kDefaultRenderSamples = 128;
inline constexpr double kDefaultNearDepth = 0.3;
inline constexpr double kDefaultSigmoidScale = 20.0;

struct RenderConfig {
  int num_samples = kDefaultRenderSamples;
  double t_near = kDefaultNearDepth;
  double t_far = 0.0;  // 0 means "use the grid diagonal"
  double sigmoid_scale = kDefaultSigmoidScale;
  bool stratified = false;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on k < 2, s <= 0 or a bad depth range.
  void validate() const;

  /// Copy with t_far filled in from the grid when it was left at 0.
  RenderConfig resolved_for(const GridSpec& grid) const;
};

struct RaySampleSet {
  std::vector<double> depths;
  std::vector<double> sdf_values;
  std::vector<double> alphas;
  std::vector<double> transmittances;  // T_1..T_k
  double rendered_depth = 0.0;
  double opacity = 0.0;  // 1 - T_{k+1}
};

/// log(1 / (1 + exp(-x))) without overflow.
double log_sigmoid(double x);

double alpha_from_sdf(double sdf_i, double sdf_next, double scale);

struct AlphaPartials {
  double alpha = 0.0;
  double d_sdf_i = 0.0;
  double d_sdf_next = 0.0;
  double d_scale = 0.0;
};

/// alpha_from_sdf with its partial derivatives. On the clamped branch
/// (raw value strictly negative) every partial is zero.
AlphaPartials alpha_with_partials(double sdf_i, double sdf_next, double scale);

/// Sample depths for one ray. With stratification each of the k equal bins
/// gets one jittered depth drawn from a counter-based generator keyed by
/// (cfg.seed, ray_key); otherwise depths are evenly spaced including both
/// ends.
std::vector<double> sample_depths(const RenderConfig& cfg, std::uint64_t ray_key);

RaySampleSet render_depth(const SdfGrid& grid, const Vec3& origin, const Vec3& direction,
                          const RenderConfig& cfg, std::uint64_t ray_key = 0);
RaySampleSet render_depth(const SdfGrid& grid, const LidarRay& ray, const RenderConfig& cfg,
                          std::uint64_t ray_key = 0);

/// d(rendered_depth)/d(alpha_i) for every sample, via the suffix recurrence
/// U_m = alpha_{m+1} t_{m+1} + (1 - alpha_{m+1}) U_{m+1}:
/// dD/dalpha_m = T_m (t_m - U_m).
std::vector<double> depth_alpha_gradient(const RaySampleSet& samples);

/// weight * ln(|rendered - measured| + 1). Throws std::invalid_argument on
/// non-finite inputs.
double geometry_loss(double rendered, double measured, double weight);

/// d geometry_loss / d rendered (zero at rendered == measured).
double geometry_loss_gradient(double rendered, double measured, double weight);

}  // namespace resim
