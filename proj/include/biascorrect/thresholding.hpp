#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "biascorrect/volume.hpp"

namespace biascorrect {

inline constexpr std::size_t kHistogramBins = 256;

/// 256 uniform bins over [lo, hi]; [0, 1] unless built for raw intensities.
struct Histogram {
  std::array<double, kHistogramBins> counts{};
  double lo = 0.0;
  double hi = 1.0;

  std::size_t bin_of(double v) const;
  /// Intensity at the lower edge of bin `cut`.
  double edge(std::size_t cut) const;
  double total() const;
};

/// Histogram of the masked voxels of v. Out-of-range values land in the
/// first or last bin.
Histogram make_histogram(const Volume& v, const Mask& mask, double lo = 0.0, double hi = 1.0);

/// Multilevel Otsu by exhaustive search. Returns k-1 strictly increasing cut
/// bins; class c holds bins [cut[c-1], cut[c]). Among tuples within 1e-12
/// relative of the best between-class variance the lexicographically lowest
/// wins. Throws DegenerateError when fewer than k bins are occupied.
std::vector<std::size_t> otsu_cuts(const Histogram& h, std::size_t k);

/// Same search, returned as intensity thresholds (lower bin edges).
std::vector<double> otsu_thresholds(const Histogram& h, std::size_t k);

/// Class index of v given ascending cuts. Values on a threshold go up.
std::size_t classify(const Histogram& h, std::span<const std::size_t> cuts, double v);

/// Initial cluster centers: mean masked intensity within each Otsu class,
/// ascending. An empty class falls back to the midpoint of its interval.
std::vector<double> init_centers(const Volume& v, const Mask& mask, std::size_t clusters);

/// Hard k-class labeling of masked voxels by Otsu thresholds; background is
/// label 0. A mask with no foreground yields all zeros.
LabelVolume segment(const Volume& v, const Mask& mask, std::size_t k = 3);

}  // namespace biascorrect
