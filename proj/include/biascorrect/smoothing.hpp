#pragma once

#include <array>
#include <span>
#include <vector>

#include "biascorrect/volume.hpp"

namespace biascorrect {

/// Per-axis Gaussian standard deviation in voxels.
using Sigma3 = std::array<double, 3>;

inline constexpr Sigma3 kDefaultBiasSigma{8.0, 8.0, 2.0};

/// Unit-sum Gaussian taps for offsets -R..R, R = ceil(3 sigma). sigma == 0
/// gives the single tap {1}.
std::vector<double> gaussian_kernel(double sigma);

/// Masked normalized separable Gaussian filter on a double field laid out
/// like `mask`. Background voxels contribute no weight and are never read;
/// each foreground output is divided by its sum of in-mask weights. Background
/// outputs are 0. `axis_order` lists the axes (0=x, 1=y, 2=z) in the order
/// the 1-D passes run.
std::vector<double> gaussian_smooth_field(std::span<const double> field, const Mask& mask,
                                          const Sigma3& sigma,
                                          std::array<int, 3> axis_order = {0, 1, 2});

Volume gaussian_smooth(const Volume& b, const Mask& mask, const Sigma3& sigma);

/// Subtracts the mean over masked voxels; background untouched. Returns the
/// removed mean.
double remove_masked_mean(std::span<double> field, const Mask& mask);

}  // namespace biascorrect
