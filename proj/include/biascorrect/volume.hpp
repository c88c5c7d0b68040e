#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "biascorrect/error.hpp"

namespace biascorrect {

/// Voxel counts along x, y, z. Flat order is x-fastest, then y, then z.
struct Dims {
  std::size_t nx = 1;
  std::size_t ny = 1;
  std::size_t nz = 1;

  std::size_t count() const { return nx * ny * nz; }
  std::size_t slice_size() const { return nx * ny; }

  std::size_t flatten(std::size_t i, std::size_t j, std::size_t k) const {
    return i + nx * (j + ny * k);
  }

  friend bool operator==(const Dims&, const Dims&) = default;
};

struct Index3 {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;

  friend bool operator==(const Index3&, const Index3&) = default;
};

inline Index3 unflatten(std::size_t n, const Dims& dims) {
  return {n % dims.nx, (n / dims.nx) % dims.ny, n / dims.slice_size()};
}

/// Physical voxel size in mm.
struct Spacing {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;

  friend bool operator==(const Spacing&, const Spacing&) = default;
};

/// Dense voxel grid in canonical layout. Base for Volume, Mask and
/// LabelVolume.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;

  explicit Grid(Dims dims, T fill = T{}) : dims_(dims), data_(dims.count(), fill) {
    check_dims(dims);
  }

  Grid(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    check_dims(dims);
    if (data_.size() != dims_.count()) {
      throw ValidationError("grid data length " + std::to_string(data_.size()) +
                            " does not match dims (" + std::to_string(dims_.count()) +
                            " voxels)");
    }
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }

  T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[dims_.flatten(i, j, k)]; }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[dims_.flatten(i, j, k)];
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static void check_dims(const Dims& d) {
    if (d.nx == 0 || d.ny == 0 || d.nz == 0) {
      throw ValidationError("grid dims must be positive");
    }
  }

  Dims dims_;
  std::vector<T> data_;
};

/// Scalar intensities (observed, corrected or bias) with spacing metadata.
class Volume : public Grid<float> {
 public:
  Volume() = default;
  explicit Volume(Dims dims, Spacing spacing = {}, float fill = 0.0f);
  Volume(Dims dims, Spacing spacing, std::vector<float> data);

  const Spacing& spacing() const { return spacing_; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Spacing spacing_;
};

/// Foreground indicator, one byte per voxel (0 or 1).
using Mask = Grid<std::uint8_t>;

enum class Material : std::uint8_t { kAir = 0, kTissue = 1, kBone = 2 };
inline constexpr std::size_t kMaterialCount = 3;

/// Per-voxel material index: 0 air, 1 tissue, 2 bone.
using LabelVolume = Grid<std::uint8_t>;

std::size_t foreground_count(const Mask& mask);

/// Full mask (every voxel foreground) with the given dims.
Mask full_mask(const Dims& dims);

void require_same_dims(const Dims& a, const Dims& b, const char* what);

/// Cardinality |M| of the in-slice 3x3 neighborhood. Used as the constant
/// normalizer even for voxels whose window is clipped.
inline constexpr std::size_t kNeighborhoodSize = 8;

/// In-bounds members of the 3x3 in-slice window around a voxel, center
/// excluded, in row-major order.
struct SliceNeighbors {
  std::array<std::size_t, kNeighborhoodSize> index{};
  std::size_t count = 0;

  const std::size_t* begin() const { return index.data(); }
  const std::size_t* end() const { return index.data() + count; }
};

SliceNeighbors neighbors_in_slice(std::size_t n, const Dims& dims);

// VBF v1: <name>.vbf.json header plus <name>.raw payload.

/// Header path for a given base path: appends ".vbf.json" unless present.
std::filesystem::path vbf_header_path(const std::filesystem::path& path);

Volume read_volume(const std::filesystem::path& path);
void write_volume(const Volume& v, const std::filesystem::path& path);

/// u8 payload variant, used for both label volumes and masks.
LabelVolume read_labels(const std::filesystem::path& path);
void write_labels(const LabelVolume& labels, const std::filesystem::path& path,
                  Spacing spacing = {});

}  // namespace biascorrect
