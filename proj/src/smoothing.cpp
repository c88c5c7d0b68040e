#include "biascorrect/smoothing.hpp"

#include <algorithm>
#include <cmath>

namespace biascorrect {

namespace {

// One 1-D pass along `axis`, zero outside the grid.
void convolve_axis(std::vector<double>& data, const Dims& d, int axis,
                   const std::vector<double>& taps) {
  if (taps.size() == 1) return;
  const auto radius = static_cast<long long>(taps.size() / 2);
  const std::size_t extent = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.slice_size();

  std::vector<double> line(extent);
  std::vector<double> result(extent);
  for (std::size_t base = 0; base < data.size(); ++base) {
    // Visit each line once via its first voxel along `axis`.
    const Index3 p = unflatten(base, d);
    const std::size_t coord = axis == 0 ? p.i : axis == 1 ? p.j : p.k;
    if (coord != 0) continue;

    for (std::size_t t = 0; t < extent; ++t) line[t] = data[base + t * stride];
    for (std::size_t t = 0; t < extent; ++t) {
      double acc = 0.0;
      const auto tt = static_cast<long long>(t);
      const long long lo = std::max(-radius, -tt);
      const long long hi = std::min(radius, static_cast<long long>(extent) - 1 - tt);
      for (long long o = lo; o <= hi; ++o) {
        acc += taps[static_cast<std::size_t>(o + radius)] * line[static_cast<std::size_t>(tt + o)];
      }
      result[t] = acc;
    }
    for (std::size_t t = 0; t < extent; ++t) data[base + t * stride] = result[t];
  }
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("Gaussian sigma must be finite and non-negative");
  }
  if (sigma == 0.0) return {1.0};
  const auto radius = static_cast<long long>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long long o = -radius; o <= radius; ++o) {
    const double x = static_cast<double>(o) / sigma;
    taps[static_cast<std::size_t>(o + radius)] = std::exp(-0.5 * x * x);
    sum += taps[static_cast<std::size_t>(o + radius)];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

std::vector<double> gaussian_smooth_field(std::span<const double> field, const Mask& mask,
                                          const Sigma3& sigma, std::array<int, 3> axis_order) {
  if (field.size() != mask.size()) throw ValidationError("field and mask sizes differ");
  const Dims& d = mask.dims();

  std::vector<double> numerator(field.size());
  std::vector<double> weight(field.size());
  for (std::size_t n = 0; n < field.size(); ++n) {
    numerator[n] = mask[n] ? field[n] : 0.0;
    weight[n] = mask[n] ? 1.0 : 0.0;
  }
  for (int axis : axis_order) {
    const auto taps = gaussian_kernel(sigma[static_cast<std::size_t>(axis)]);
    convolve_axis(numerator, d, axis, taps);
    convolve_axis(weight, d, axis, taps);
  }

  std::vector<double> out(field.size(), 0.0);
  for (std::size_t n = 0; n < field.size(); ++n) {
    // A masked voxel always carries its own center tap, so weight > 0.
    if (mask[n]) out[n] = numerator[n] / weight[n];
  }
  return out;
}

Volume gaussian_smooth(const Volume& b, const Mask& mask, const Sigma3& sigma) {
  require_same_dims(b.dims(), mask.dims(), "smoothing field vs mask");
  std::vector<double> field(b.begin(), b.end());
  const auto smoothed = gaussian_smooth_field(field, mask, sigma);
  Volume out(b.dims(), b.spacing(), 0.0f);
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = static_cast<float>(smoothed[n]);
  return out;
}

double remove_masked_mean(std::span<double> field, const Mask& mask) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < field.size(); ++n) {
    if (!mask[n]) continue;
    sum += field[n];
    ++count;
  }
  if (count == 0) return 0.0;
  const double mean = sum / static_cast<double>(count);
  for (std::size_t n = 0; n < field.size(); ++n) {
    if (mask[n]) field[n] -= mean;
  }
  return mean;
}

}  // namespace biascorrect
