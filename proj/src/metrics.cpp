#include "resim/metrics.hpp"

#include "resim/kdtree.hpp"
#include "resim/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>

namespace resim {

std::size_t truncation_discard_count(std::size_t n, double fraction) {
  if (n == 0) return 0;
  // the tolerance keeps (1 - 0.97) * 100 = 3.0000000000000027 at 3
  const double raw = std::ceil((1.0 - fraction) * static_cast<double>(n) - 1e-9);
  const auto discard = static_cast<std::size_t>(std::max(0.0, raw));
  return std::min(discard, n - 1);
}

std::vector<double> nearest_squared_distances(std::span<const Vec3> from,
                                              std::span<const Vec3> to, int threads) {
  const NearestNeighborIndex index(to);
  std::vector<double> out(from.size());
  parallel_for(from.size(), threads,
               [&](std::size_t i) { out[i] = index.nearest(from[i]).distance_sq; });
  return out;
}

namespace {

double truncated_mean(std::vector<double> d, double fraction) {
  std::sort(d.begin(), d.end());
  const std::size_t keep = d.size() - truncation_discard_count(d.size(), fraction);
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) sum += d[i];
  return sum / static_cast<double>(keep);
}

}  // namespace

CdResult chamfer(std::span<const Vec3> g_hat, std::span<const Vec3> g, double fraction,
                 int threads) {
  if (g_hat.empty() || g.empty()) throw std::invalid_argument("chamfer: empty point cloud");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("chamfer: truncation fraction must be in (0, 1]");
  }
  CdResult r;
  r.truncation_fraction = fraction;
  r.forward_term = truncated_mean(nearest_squared_distances(g_hat, g, threads), fraction);
  r.backward_term = truncated_mean(nearest_squared_distances(g, g_hat, threads), fraction);
  r.total = r.forward_term + r.backward_term;
  return r;
}

CdResult chamfer(const PointCloud& g_hat, const PointCloud& g, double fraction, int threads) {
  return chamfer(std::span<const Vec3>(g_hat.points), std::span<const Vec3>(g.points), fraction,
                 threads);
}

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("rmse: " + std::to_string(a.size()) + " rendered vs " +
                                std::to_string(b.size()) + " measured depths");
  }
  if (a.empty()) throw std::invalid_argument("rmse: no depths");
}

}  // namespace

double rmse_depth(std::span<const double> rendered, std::span<const double> measured) {
  check_pair(rendered, measured);
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    const double r = rendered[i] - measured[i];
    sum += r * r;
  }
  return std::sqrt(sum / static_cast<double>(rendered.size()));
}

double unsquared_rmse(std::span<const double> rendered, std::span<const double> measured) {
  check_pair(rendered, measured);
  double sum = 0.0;
  for (std::size_t i = 0; i < rendered.size(); ++i) sum += rendered[i] - measured[i];
  const double mean = sum / static_cast<double>(rendered.size());
  return mean < 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(mean);
}

std::vector<SequenceScore> rank_sequences(std::span<const SequenceScore> scores) {
  std::vector<SequenceScore> out(scores.begin(), scores.end());
  std::stable_sort(out.begin(), out.end(), [](const SequenceScore& a, const SequenceScore& b) {
    if (a.cd != b.cd) return a.cd < b.cd;
    if (a.rmse != b.rmse) return a.rmse < b.rmse;
    return a.sequence_id < b.sequence_id;
  });
  return out;
}

std::size_t SizeHistogram::sample_count(ObjectClass c) const {
  auto it = classes.find(c);
  if (it == classes.end()) return 0;
  std::size_t n = 0;
  for (auto k : it->second[0].counts) n += k;
  return n;
}

SizeHistogram size_distribution(std::span<const BoxLabel> labels, double bin_width) {
  if (!(bin_width > 0.0)) throw std::invalid_argument("size_distribution: bin_width must be > 0");
  SizeHistogram h;
  h.bin_width = bin_width;
  std::map<ObjectClass, std::array<std::vector<double>, 3>> values;
  for (const auto& b : labels) {
    for (int a = 0; a < 3; ++a) values[b.class_name][a].push_back(b.size[a]);
  }
  for (const auto& [cls, dims] : values) {
    auto& out = h.classes[cls];
    for (int a = 0; a < 3; ++a) {
      const auto [lo_it, hi_it] = std::minmax_element(dims[a].begin(), dims[a].end());
      const auto first = static_cast<long long>(std::floor(*lo_it / bin_width));
      const auto last = static_cast<long long>(std::floor(*hi_it / bin_width));
      // A maximum sitting exactly on an edge closes the previous bin instead
      // of opening an empty one.
      long long nbins = last - first + 1;
      if (nbins > 1 && static_cast<double>(last) * bin_width == *hi_it) --nbins;
      auto& dh = out[a];
      dh.first_bin = first;
      dh.counts.assign(static_cast<std::size_t>(nbins), 0);
      for (long long i = 0; i <= nbins; ++i) {
        dh.edges.push_back(static_cast<double>(first + i) * bin_width);
      }
      for (double x : dims[a]) {
        long long bin = static_cast<long long>(std::floor(x / bin_width)) - first;
        bin = std::clamp<long long>(bin, 0, nbins - 1);
        ++dh.counts[static_cast<std::size_t>(bin)];
      }
    }
  }
  return h;
}

namespace {

double dimension_divergence(const DimensionHistogram& a, const DimensionHistogram& b) {
  double na = 0.0, nb = 0.0;
  for (auto c : a.counts) na += static_cast<double>(c);
  for (auto c : b.counts) nb += static_cast<double>(c);
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  double overlap = 0.0;
  for (std::size_t i = 0; i < a.counts.size(); ++i) {
    const long long j = a.first_bin + static_cast<long long>(i) - b.first_bin;
    if (j < 0 || j >= static_cast<long long>(b.counts.size())) continue;
    overlap += std::min(static_cast<double>(a.counts[i]) / na,
                        static_cast<double>(b.counts[static_cast<std::size_t>(j)]) / nb);
  }
  return std::clamp(1.0 - overlap, 0.0, 1.0);
}

}  // namespace

double distribution_divergence(const SizeHistogram& a, const SizeHistogram& b) {
  if (a.classes.empty() && b.classes.empty()) return 0.0;
  if (a.bin_width != b.bin_width) {
    throw std::invalid_argument("distribution_divergence: histograms use different bin widths");
  }
  std::set<ObjectClass> all;
  for (const auto& [c, _] : a.classes) all.insert(c);
  for (const auto& [c, _] : b.classes) all.insert(c);
  double sum = 0.0;
  for (ObjectClass c : all) {
    auto ia = a.classes.find(c);
    auto ib = b.classes.find(c);
    if (ia == a.classes.end() || ib == b.classes.end()) {
      sum += 1.0;
      continue;
    }
    double d = 0.0;
    for (int k = 0; k < 3; ++k) d += dimension_divergence(ia->second[k], ib->second[k]);
    sum += d / 3.0;
  }
  return sum / static_cast<double>(all.size());
}

std::string scores_csv(std::span<const SequenceScore> scores) {
  std::string out = "sequence_id,rmse,cd\n";
  char buf[128];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof(buf), ",%.9g,%.9g\n", s.rmse, s.cd);
    out += s.sequence_id + buf;
  }
  return out;
}

std::string histogram_csv(const SizeHistogram& h) {
  std::string out = "class,dimension,bin_lo,bin_hi,count\n";
  char buf[160];
  for (const auto& [cls, dims] : h.classes) {
    for (int a = 0; a < 3; ++a) {
      const auto& d = dims[a];
      for (std::size_t i = 0; i < d.counts.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%zu\n",
                      std::string(to_string(cls)).c_str(), kSizeDimensionNames[a], d.edges[i],
                      d.edges[i + 1], d.counts[i]);
        out += buf;
      }
    }
  }
  return out;
}

}  // namespace resim
