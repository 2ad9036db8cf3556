// Reconstruction scores and object-size statistics.
//
// Chamfer terms are means of squared nearest-neighbor distances (not their
// roots), so a unit separation between two single points scores 1 per
// direction.
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

inline constexpr double kDefaultTruncation = 0.97;

struct CdResult {
  double forward_term = 0.0;   // g_hat -> g
  double backward_term = 0.0;  // g -> g_hat
  double total = 0.0;
  double truncation_fraction = 1.0;
};

/// Number of largest distances dropped from n when keeping `fraction`:
/// ceil((1 - fraction) * n), never all of them.
std::size_t truncation_discard_count(std::size_t n, double fraction);

/// Squared distance from every `from` point to its nearest `to` point.
std::vector<double> nearest_squared_distances(std::span<const Vec3> from,
                                              std::span<const Vec3> to, int threads = 1);

/// Throws std::invalid_argument on an empty cloud or a fraction outside
/// (0, 1].
CdResult chamfer(std::span<const Vec3> g_hat, std::span<const Vec3> g,
                 double truncation_fraction = kDefaultTruncation, int threads = 1);
CdResult chamfer(const PointCloud& g_hat, const PointCloud& g,
                 double truncation_fraction = kDefaultTruncation, int threads = 1);

/// sqrt(mean((rendered - measured)^2)). Throws std::invalid_argument on a
/// length mismatch or empty input.
double rmse_depth(std::span<const double> rendered, std::span<const double> measured);

/// The variant without the inner square, sqrt(mean(rendered - measured)).
/// NaN when the mean residual is negative. Reported for comparison only.
double unsquared_rmse(std::span<const double> rendered, std::span<const double> measured);

struct SequenceScore {
  std::string sequence_id;
  double rmse = 0.0;
  double cd = 0.0;
};

/// Ascending by cd, then rmse, then id.
std::vector<SequenceScore> rank_sequences(std::span<const SequenceScore> scores);

struct DimensionHistogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<std::size_t> counts;
  long long first_bin = 0;  // edges[0] == first_bin * bin_width
};

/// Bins are right-open except the last. Edges are multiples of bin_width,
/// so histograms with the same bin width share a lattice and compare
/// without interpolation.
struct SizeHistogram {
  double bin_width = 0.0;
  std::map<ObjectClass, std::array<DimensionHistogram, 3>> classes;

  std::size_t sample_count(ObjectClass c) const;
};

inline constexpr std::array<const char*, 3> kSizeDimensionNames = {"length", "width", "height"};

/// Throws std::invalid_argument unless bin_width > 0.
SizeHistogram size_distribution(std::span<const BoxLabel> labels, double bin_width);

/// 1 - histogram intersection of normalized counts, averaged over the three
/// dimensions and over the union of classes (a class seen on one side only
/// contributes 1). Two empty histograms give 0. Throws
/// std::invalid_argument when bin widths differ.
double distribution_divergence(const SizeHistogram& a, const SizeHistogram& b);

/// `sequence_id,rmse,cd` with a header row.
std::string scores_csv(std::span<const SequenceScore> scores);
/// `class,dimension,bin_lo,bin_hi,count` with a header row.
std::string histogram_csv(const SizeHistogram& h);

}  // namespace resim
