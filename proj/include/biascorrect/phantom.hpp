#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include <json.hpp>

#include "biascorrect/volume.hpp"

namespace biascorrect {

/// Ellipsoid offset from the head center, semi-axes in voxels.
struct EllipsoidSpec {
  std::array<double, 3> offset{0.0, 0.0, 0.0};
  std::array<double, 3> semi_axes{1.0, 1.0, 1.0};
};

/// Head-like phantom: an ellipsoid of soft tissue inside a bone shell, with an
/// optional air cavity. Axes with a single voxel are ignored, so nz = 1 gives
/// a disk.
struct PhantomSpec {
  Dims dims{64, 64, 32};
  Spacing spacing{};
  std::array<double, 3> semi_axes{28.0, 28.0, 14.0};
  double shell_thickness = 3.0;
  std::array<double, 3> intensities{0.10, 0.45, 0.70};  // air, tissue, bone
  std::optional<EllipsoidSpec> cavity = EllipsoidSpec{{0.0, 6.0, 0.0}, {6.0, 4.0, 4.0}};
  double noise_sigma = 0.005;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Phantom {
  Volume truth;
  LabelVolume labels;
  Mask mask;  // head support
};

/// Throws ValidationError when the geometry does not fit or the spec is
/// otherwise invalid.
Phantom make_phantom(const PhantomSpec& spec);

enum class BiasKind { kCuppingRadial, kPolynomial, kGaussianBlobs };

struct BiasSpec {
  BiasKind kind = BiasKind::kCuppingRadial;
  double amplitude = 0.15;
  bool zero_mean = true;
  // kPolynomial: weights of x, y, z, x^2, y^2, z^2 in grid coordinates scaled
  // to [-1, 1].
  std::array<double, 6> polynomial{0.0, 0.0, 0.5, 0.5, 0.5, 0.0};
  // kGaussianBlobs: count, width as a fraction of the smallest non-trivial
  // extent, and placement seed.
  std::size_t blob_count = 3;
  double blob_width = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Smooth field supported on `mask`, zero elsewhere. Cupping is
/// -amplitude * (1 - (r / r_max)^2) with r the in-slice distance from the
/// volume axis and r_max its maximum over the mask.
Volume make_bias(const BiasSpec& spec, const Dims& dims, const Mask& mask, Spacing spacing = {});

/// truth + bias, clamped to [0, 1].
Volume corrupt(const Volume& truth, const Volume& bias);

BiasKind bias_kind_from_string(const std::string& name);
std::string to_string(BiasKind kind);

// JSON forms. Missing fields keep their defaults; invalid values raise
// ValidationError naming the field.
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
BiasSpec bias_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PhantomSpec& spec);
nlohmann::json to_json(const BiasSpec& spec);

}  // namespace biascorrect
