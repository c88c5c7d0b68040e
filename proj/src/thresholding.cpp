#include "biascorrect/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace biascorrect {

std::size_t Histogram::bin_of(double v) const {
  const double t = (v - lo) / (hi - lo) * static_cast<double>(kHistogramBins);
  if (!(t > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(std::floor(t)), kHistogramBins - 1);
}

double Histogram::edge(std::size_t cut) const {
  return lo + (hi - lo) * static_cast<double>(cut) / static_cast<double>(kHistogramBins);
}

double Histogram::total() const {
  double s = 0.0;
  for (double c : counts) s += c;
  return s;
}

Histogram make_histogram(const Volume& v, const Mask& mask, double lo, double hi) {
  require_same_dims(v.dims(), mask.dims(), "histogram volume vs mask");
  if (!(hi > lo)) throw ValidationError("histogram range must satisfy hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (mask[n]) h.counts[h.bin_of(v[n])] += 1.0;
  }
  return h;
}

std::vector<std::size_t> otsu_cuts(const Histogram& h, std::size_t k) {
  if (k < 2 || k > 4) throw ValidationError("Otsu class count must be 2, 3 or 4");
  const auto occupied = std::count_if(h.counts.begin(), h.counts.end(),
                                      [](double c) { return c > 0.0; });
  if (static_cast<std::size_t>(occupied) < k) {
    throw DegenerateError("histogram has " + std::to_string(occupied) +
                          " occupied bins, cannot split into " + std::to_string(k) +
                          " classes");
  }

  // Prefix sums of weight and first moment (bin centers in bin units).
  std::array<double, kHistogramBins + 1> weight{};
  std::array<double, kHistogramBins + 1> moment{};
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    weight[b + 1] = weight[b] + h.counts[b];
    moment[b + 1] = moment[b] + h.counts[b] * (static_cast<double>(b) + 0.5);
  }
  auto class_term = [&](std::size_t a, std::size_t b) {
    const double w = weight[b] - weight[a];
    const double s = moment[b] - moment[a];
    return s * s / w;
  };

  // Maximizing sum_c S_c^2 / W_c is equivalent to maximizing the
  // between-class variance since the total mean is fixed.
  std::vector<std::size_t> cuts(k - 1);
  std::vector<std::size_t> best;
  double best_score = -1.0;
  std::function<void(std::size_t, std::size_t, double)> search =
      [&](std::size_t level, std::size_t start, double partial) {
        if (level == k - 1) {
          if (weight[kHistogramBins] - weight[start] <= 0.0) return;
          const double score = partial + class_term(start, kHistogramBins);
          if (best.empty() || score > best_score * (1.0 + 1e-12)) {
            best_score = score;
            best = cuts;
          }
          return;
        }
        const std::size_t remaining = k - 1 - level;
        for (std::size_t t = start + 1; t + remaining <= kHistogramBins; ++t) {
          if (weight[t] - weight[start] <= 0.0) continue;
          cuts[level] = t;
          search(level + 1, t, partial + class_term(start, t));
        }
      };
  search(0, 0, 0.0);
  return best;
}

std::vector<double> otsu_thresholds(const Histogram& h, std::size_t k) {
  std::vector<double> out;
  for (std::size_t cut : otsu_cuts(h, k)) out.push_back(h.edge(cut));
  return out;
}

std::size_t classify(const Histogram& h, std::span<const std::size_t> cuts, double v) {
  const std::size_t bin = h.bin_of(v);
  return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), bin) - cuts.begin());
}

std::vector<double> init_centers(const Volume& v, const Mask& mask, std::size_t clusters) {
  const Histogram h = make_histogram(v, mask);
  const auto cuts = otsu_cuts(h, clusters);

  std::vector<double> sum(clusters, 0.0);
  std::vector<std::size_t> count(clusters, 0);
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (!mask[n]) continue;
    const std::size_t c = classify(h, cuts, v[n]);
    sum[c] += v[n];
    ++count[c];
  }
  std::vector<double> centers(clusters);
  for (std::size_t c = 0; c < clusters; ++c) {
    if (count[c] > 0) {
      centers[c] = sum[c] / static_cast<double>(count[c]);
    } else {
      const double lower = c == 0 ? h.lo : h.edge(cuts[c - 1]);
      const double upper = c + 1 == clusters ? h.hi : h.edge(cuts[c]);
      centers[c] = 0.5 * (lower + upper);
    }
  }
  return centers;
}

LabelVolume segment(const Volume& v, const Mask& mask, std::size_t k) {
  require_same_dims(v.dims(), mask.dims(), "segment volume vs mask");
  LabelVolume labels(v.dims(), std::uint8_t{0});
  if (foreground_count(mask) == 0) return labels;
  const Histogram h = make_histogram(v, mask);
  const auto cuts = otsu_cuts(h, k);
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (mask[n]) labels[n] = static_cast<std::uint8_t>(classify(h, cuts, v[n]));
  }
  return labels;
}

}  // namespace biascorrect
