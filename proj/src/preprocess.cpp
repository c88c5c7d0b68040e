#include "biascorrect/preprocess.hpp"

#include <algorithm>
#include <numeric>

#include "biascorrect/thresholding.hpp"

namespace biascorrect {

namespace {

class DisjointSet {
 public:
  std::uint32_t make() {
    parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return parent_.back();
  }

  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    // Smaller root wins so the final numbering follows first appearance.
    if (a < b) {
      parent_[b] = a;
    } else {
      parent_[a] = b;
    }
  }

  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::uint32_t> parent_;
};

std::pair<float, float> masked_range(const Volume& v, const Mask& mask) {
  float lo = 0.0f;
  float hi = 0.0f;
  bool any = false;
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (!mask[n]) continue;
    if (!any) {
      lo = hi = v[n];
      any = true;
    } else {
      lo = std::min(lo, v[n]);
      hi = std::max(hi, v[n]);
    }
  }
  if (!any) throw DegenerateError("mask has no foreground voxels");
  return {lo, hi};
}

}  // namespace

Components label_components(const Mask& binary) {
  const Dims& d = binary.dims();
  std::vector<std::uint32_t> provisional(binary.size(), 0);
  DisjointSet sets;
  sets.make();  // slot 0 is background

  // First pass: provisional labels from the three causal neighbors.
  for (std::size_t k = 0; k < d.nz; ++k) {
    for (std::size_t j = 0; j < d.ny; ++j) {
      for (std::size_t i = 0; i < d.nx; ++i) {
        const std::size_t n = d.flatten(i, j, k);
        if (!binary[n]) continue;
        std::uint32_t label = 0;
        auto merge = [&](std::size_t m) {
          const std::uint32_t other = provisional[m];
          if (other == 0) return;
          if (label == 0) {
            label = other;
          } else {
            sets.unite(label, other);
          }
        };
        if (i > 0) merge(n - 1);
        if (j > 0) merge(n - d.nx);
        if (k > 0) merge(n - d.slice_size());
        provisional[n] = label != 0 ? label : sets.make();
      }
    }
  }

  // Second pass: resolve to roots and renumber densely.
  std::vector<std::uint32_t> final_id(sets.size(), 0);
  Components out;
  out.labels.assign(binary.size(), 0);
  for (std::size_t n = 0; n < binary.size(); ++n) {
    if (provisional[n] == 0) continue;
    const std::uint32_t root = sets.find(provisional[n]);
    if (final_id[root] == 0) {
      out.sizes.push_back(0);
      final_id[root] = static_cast<std::uint32_t>(out.sizes.size());
    }
    out.labels[n] = final_id[root];
    ++out.sizes[final_id[root] - 1];
  }
  return out;
}

Mask extract_foreground(const Volume& v) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  Mask binary(v.dims(), std::uint8_t{0});

  bool thresholded = false;
  if (*hi_it > *lo_it) {
    const Histogram h = make_histogram(v, full_mask(v.dims()), *lo_it, *hi_it);
    try {
      const auto cuts = otsu_cuts(h, 2);
      for (std::size_t n = 0; n < v.size(); ++n) {
        binary[n] = classify(h, cuts, v[n]) == 1 ? 1 : 0;
      }
      thresholded = true;
    } catch (const DegenerateError&) {
      // Fall through to the nonzero rule below.
    }
  }
  if (!thresholded) {
    for (std::size_t n = 0; n < v.size(); ++n) binary[n] = v[n] != 0.0f ? 1 : 0;
  }

  const Components cc = label_components(binary);
  if (cc.count() == 0) throw DegenerateError("binarization produced no foreground voxels");
  const auto largest = static_cast<std::uint32_t>(
      std::max_element(cc.sizes.begin(), cc.sizes.end()) - cc.sizes.begin() + 1);

  Mask mask(v.dims(), std::uint8_t{0});
  for (std::size_t n = 0; n < mask.size(); ++n) mask[n] = cc.labels[n] == largest ? 1 : 0;
  return mask;
}

Volume clip_outliers(const Volume& v, const Mask& mask, double lo_frac, double hi_frac) {
  require_same_dims(v.dims(), mask.dims(), "clip volume vs mask");
  if (!(0.0 <= lo_frac && lo_frac <= hi_frac && hi_frac <= 1.0)) {
    throw ValidationError("clip fractions must satisfy 0 <= lo <= hi <= 1");
  }
  const auto [vmin, vmax] = masked_range(v, mask);
  if (vmax == vmin) return v;

  const double range = static_cast<double>(vmax) - vmin;
  const auto lo = static_cast<float>(vmin + lo_frac * range);
  const auto hi = static_cast<float>(vmin + hi_frac * range);
  Volume out = v;
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = mask[n] ? std::clamp(v[n], lo, hi) : 0.0f;
  }
  return out;
}

Normalized normalize_unit(const Volume& v, const Mask& mask) {
  require_same_dims(v.dims(), mask.dims(), "normalize volume vs mask");
  const auto [vmin, vmax] = masked_range(v, mask);

  Normalized out{Volume(v.dims(), v.spacing(), 0.0f), 1.0, -static_cast<double>(vmin)};
  if (vmax == vmin) return out;

  out.scale = 1.0 / (static_cast<double>(vmax) - vmin);
  out.offset = -static_cast<double>(vmin) * out.scale;
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (!mask[n]) continue;
    const double x = out.scale * v[n] + out.offset;
    out.volume[n] = static_cast<float>(std::clamp(x, 0.0, 1.0));
  }
  return out;
}

Preprocessed preprocess(const Volume& v, double lo_frac, double hi_frac) {
  Mask mask = extract_foreground(v);
  Volume clipped = clip_outliers(v, mask, lo_frac, hi_frac);
  Normalized normalized = normalize_unit(clipped, mask);
  return {std::move(mask), std::move(normalized)};
}

}  // namespace biascorrect
