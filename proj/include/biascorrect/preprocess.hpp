#pragma once

#include <cstdint>
#include <vector>

#include "biascorrect/volume.hpp"

namespace biascorrect {

/// 6-connected component labels of a binary mask. Background is 0, components
/// are numbered 1..count in order of first appearance in flat order.
struct Components {
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> sizes;  // sizes[c - 1] is the voxel count of component c
  std::size_t count() const { return sizes.size(); }
};

Components label_components(const Mask& binary);

/// Binarizes v with a single-level Otsu threshold over all voxels and keeps the
/// largest 6-connected component. A single-valued volume has no threshold;
/// every nonzero voxel is then foreground. Throws DegenerateError if nothing
/// survives binarization.
Mask extract_foreground(const Volume& v);

/// Clamps masked voxels into [vmin + lo_frac*(vmax-vmin), vmin + hi_frac*(vmax-vmin)]
/// where vmin/vmax span the masked intensities; background is set to 0.
/// A flat masked spectrum returns v unchanged.
Volume clip_outliers(const Volume& v, const Mask& mask, double lo_frac = 0.05,
                     double hi_frac = 0.85);

/// Result of mapping masked intensities onto [0, 1]: normalized = scale * raw + offset.
struct Normalized {
  Volume volume;
  double scale = 1.0;
  double offset = 0.0;

  /// Raw-unit value for a normalized value.
  double to_raw(double normalized) const { return (normalized - offset) / scale; }
};

Normalized normalize_unit(const Volume& v, const Mask& mask);

struct Preprocessed {
  Mask mask;
  Normalized normalized;
};

/// extract_foreground, clip_outliers and normalize_unit in sequence.
Preprocessed preprocess(const Volume& v, double lo_frac = 0.05, double hi_frac = 0.85);

}  // namespace biascorrect
