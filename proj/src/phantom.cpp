#include "biascorrect/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace biascorrect {

namespace {

std::array<double, 3> grid_center(const Dims& d) {
  return {0.5 * (static_cast<double>(d.nx) - 1.0), 0.5 * (static_cast<double>(d.ny) - 1.0),
          0.5 * (static_cast<double>(d.nz) - 1.0)};
}

std::array<std::size_t, 3> extents(const Dims& d) { return {d.nx, d.ny, d.nz}; }

// Squared normalized radius of voxel p in an axis-aligned ellipsoid; axes of
// extent 1 are skipped. A non-positive semi-axis on an active axis means the
// ellipsoid is empty.
double ellipsoid_radius2(const Dims& d, const Index3& p, const std::array<double, 3>& center,
                         const std::array<double, 3>& semi) {
  const std::array<double, 3> pos{static_cast<double>(p.i), static_cast<double>(p.j),
                                  static_cast<double>(p.k)};
  const auto ext = extents(d);
  double r2 = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    if (ext[a] == 1) continue;
    if (semi[a] <= 0.0) return std::numeric_limits<double>::infinity();
    const double u = (pos[a] - center[a]) / semi[a];
    r2 += u * u;
  }
  return r2;
}

template <typename T>
T field_or(const nlohmann::json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("field '") + name + "': " + e.what());
  }
}

}  // namespace

void PhantomSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("invalid phantom field '" + field + "': " + why);
  };
  if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0) fail("dims", "must be positive");
  if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) fail("spacing", "must be positive");
  if (!(shell_thickness >= 1.0)) fail("shell_thickness", "must be at least 1 voxel");
  const auto& [air, tissue, bone] = intensities;
  if (!(0.0 <= air && air < tissue && tissue < bone && bone <= 1.0)) {
    fail("intensities", "must satisfy 0 <= air < tissue < bone <= 1");
  }
  if (!(noise_sigma >= 0.0)) fail("noise_sigma", "must be >= 0");
  const auto ext = extents(dims);
  for (std::size_t a = 0; a < 3; ++a) {
    if (ext[a] == 1) continue;
    if (!(semi_axes[a] > 0.0)) fail("semi_axes", "must be positive");
    if (semi_axes[a] > 0.5 * (static_cast<double>(ext[a]) - 1.0)) {
      fail("semi_axes", "head does not fit inside dims along axis " + std::to_string(a));
    }
  }
  if (cavity) {
    for (std::size_t a = 0; a < 3; ++a) {
      if (ext[a] != 1 && !(cavity->semi_axes[a] > 0.0)) {
        fail("cavity.semi_axes", "must be positive");
      }
    }
  }
}

Phantom make_phantom(const PhantomSpec& spec) {
  spec.validate();
  const Dims& d = spec.dims;
  const auto center = grid_center(d);
  std::array<double, 3> inner{};
  for (std::size_t a = 0; a < 3; ++a) inner[a] = spec.semi_axes[a] - spec.shell_thickness;
  std::array<double, 3> cavity_center = center;
  if (spec.cavity) {
    for (std::size_t a = 0; a < 3; ++a) cavity_center[a] += spec.cavity->offset[a];
  }

  Phantom out{Volume(d, spec.spacing, 0.0f), LabelVolume(d, std::uint8_t{0}),
              Mask(d, std::uint8_t{0})};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  for (std::size_t n = 0; n < d.count(); ++n) {
    const Index3 p = unflatten(n, d);
    if (ellipsoid_radius2(d, p, center, spec.semi_axes) > 1.0) continue;
    Material m = Material::kBone;
    if (ellipsoid_radius2(d, p, center, inner) <= 1.0) {
      m = Material::kTissue;
      if (spec.cavity &&
          ellipsoid_radius2(d, p, cavity_center, spec.cavity->semi_axes) <= 1.0) {
        m = Material::kAir;
      }
    }
    out.mask[n] = 1;
    out.labels[n] = static_cast<std::uint8_t>(m);
    double value = spec.intensities[static_cast<std::size_t>(m)];
    if (spec.noise_sigma > 0.0) value += spec.noise_sigma * noise(rng);
    out.truth[n] = static_cast<float>(value);
  }
  return out;
}

void BiasSpec::validate() const {
  if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) {
    throw ValidationError("invalid bias field 'amplitude': must be finite and >= 0");
  }
  if (kind == BiasKind::kGaussianBlobs && !(blob_width > 0.0)) {
    throw ValidationError("invalid bias field 'blob_width': must be > 0");
  }
}

Volume make_bias(const BiasSpec& spec, const Dims& dims, const Mask& mask, Spacing spacing) {
  spec.validate();
  require_same_dims(dims, mask.dims(), "bias dims vs mask");
  const auto center = grid_center(dims);
  const auto ext = extents(dims);
  std::vector<double> field(dims.count(), 0.0);

  switch (spec.kind) {
    case BiasKind::kCuppingRadial: {
      auto radius2 = [&](const Index3& p) {
        const double dx = static_cast<double>(p.i) - center[0];
        const double dy = static_cast<double>(p.j) - center[1];
        return dx * dx + dy * dy;
      };
      double r2_max = 0.0;
      for (std::size_t n = 0; n < field.size(); ++n) {
        if (mask[n]) r2_max = std::max(r2_max, radius2(unflatten(n, dims)));
      }
      for (std::size_t n = 0; n < field.size(); ++n) {
        if (!mask[n]) continue;
        const double rel = r2_max > 0.0 ? radius2(unflatten(n, dims)) / r2_max : 0.0;
        field[n] = -spec.amplitude * (1.0 - rel);
      }
      break;
    }
    case BiasKind::kPolynomial: {
      for (std::size_t n = 0; n < field.size(); ++n) {
        if (!mask[n]) continue;
        const Index3 p = unflatten(n, dims);
        const std::array<std::size_t, 3> pos{p.i, p.j, p.k};
        double value = 0.0;
        for (std::size_t a = 0; a < 3; ++a) {
          if (ext[a] == 1) continue;
          const double u = (static_cast<double>(pos[a]) - center[a]) / center[a];
          value += spec.polynomial[a] * u + spec.polynomial[3 + a] * u * u;
        }
        field[n] = spec.amplitude * value;
      }
      break;
    }
    case BiasKind::kGaussianBlobs: {
      std::size_t smallest = 0;
      for (std::size_t e : ext) {
        if (e > 1) smallest = smallest == 0 ? e : std::min(smallest, e);
      }
      const double width = spec.blob_width * static_cast<double>(std::max<std::size_t>(smallest, 1));
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (std::size_t b = 0; b < spec.blob_count; ++b) {
        std::array<double, 3> c{};
        for (std::size_t a = 0; a < 3; ++a) c[a] = unit(rng) * static_cast<double>(ext[a] - 1);
        const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        for (std::size_t n = 0; n < field.size(); ++n) {
          if (!mask[n]) continue;
          const Index3 p = unflatten(n, dims);
          const double dx = static_cast<double>(p.i) - c[0];
          const double dy = static_cast<double>(p.j) - c[1];
          const double dz = static_cast<double>(p.k) - c[2];
          field[n] += sign * spec.amplitude *
                      std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * width * width));
        }
      }
      break;
    }
  }

  if (spec.zero_mean) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < field.size(); ++n) {
      if (!mask[n]) continue;
      sum += field[n];
      ++count;
    }
    if (count > 0) {
      const double mean = sum / static_cast<double>(count);
      for (std::size_t n = 0; n < field.size(); ++n) {
        if (mask[n]) field[n] -= mean;
      }
    }
  }

  Volume out(dims, spacing, 0.0f);
  for (std::size_t n = 0; n < field.size(); ++n) out[n] = static_cast<float>(field[n]);
  return out;
}

Volume corrupt(const Volume& truth, const Volume& bias) {
  require_same_dims(truth.dims(), bias.dims(), "corrupt truth vs bias");
  Volume out = truth;
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = std::clamp(truth[n] + bias[n], 0.0f, 1.0f);
  }
  return out;
}

BiasKind bias_kind_from_string(const std::string& name) {
  if (name == "cupping-radial") return BiasKind::kCuppingRadial;
  if (name == "polynomial") return BiasKind::kPolynomial;
  if (name == "gaussian-blobs") return BiasKind::kGaussianBlobs;
  throw ValidationError("invalid bias field 'kind': unknown value '" + name + "'");
}

std::string to_string(BiasKind kind) {
  switch (kind) {
    case BiasKind::kCuppingRadial:
      return "cupping-radial";
    case BiasKind::kPolynomial:
      return "polynomial";
    case BiasKind::kGaussianBlobs:
      return "gaussian-blobs";
  }
  return "unknown";
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("phantom spec must be a JSON object");
  PhantomSpec s;
  const auto dims = field_or<std::vector<std::size_t>>(j, "dims", {s.dims.nx, s.dims.ny, s.dims.nz});
  const auto spacing =
      field_or<std::vector<double>>(j, "spacing", {s.spacing.sx, s.spacing.sy, s.spacing.sz});
  if (dims.size() != 3) throw ValidationError("invalid phantom field 'dims': need 3 entries");
  if (spacing.size() != 3) throw ValidationError("invalid phantom field 'spacing': need 3 entries");
  s.dims = {dims[0], dims[1], dims[2]};
  s.spacing = {spacing[0], spacing[1], spacing[2]};
  s.semi_axes = field_or(j, "semi_axes", s.semi_axes);
  s.shell_thickness = field_or(j, "shell_thickness", s.shell_thickness);
  s.intensities = field_or(j, "intensities", s.intensities);
  if (j.contains("cavity")) {
    if (j.at("cavity").is_null()) {
      s.cavity.reset();
    } else {
      EllipsoidSpec c;
      c.offset = field_or(j.at("cavity"), "offset", c.offset);
      c.semi_axes = field_or(j.at("cavity"), "semi_axes", c.semi_axes);
      s.cavity = c;
    }
  }
  s.noise_sigma = field_or(j, "noise_sigma", s.noise_sigma);
  s.seed = field_or(j, "seed", s.seed);
  s.validate();
  return s;
}

BiasSpec bias_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("bias spec must be a JSON object");
  BiasSpec s;
  s.kind = bias_kind_from_string(field_or<std::string>(j, "kind", to_string(s.kind)));
  s.amplitude = field_or(j, "amplitude", s.amplitude);
  s.zero_mean = field_or(j, "zero_mean", s.zero_mean);
  s.polynomial = field_or(j, "polynomial", s.polynomial);
  s.blob_count = field_or(j, "blob_count", s.blob_count);
  s.blob_width = field_or(j, "blob_width", s.blob_width);
  s.seed = field_or(j, "seed", s.seed);
  s.validate();
  return s;
}

nlohmann::json to_json(const PhantomSpec& s) {
  nlohmann::json j;
  j["dims"] = {s.dims.nx, s.dims.ny, s.dims.nz};
  j["spacing"] = {s.spacing.sx, s.spacing.sy, s.spacing.sz};
  j["semi_axes"] = s.semi_axes;
  j["shell_thickness"] = s.shell_thickness;
  j["intensities"] = s.intensities;
  if (s.cavity) {
    j["cavity"] = {{"offset", s.cavity->offset}, {"semi_axes", s.cavity->semi_axes}};
  } else {
    j["cavity"] = nullptr;
  }
  j["noise_sigma"] = s.noise_sigma;
  j["seed"] = s.seed;
  return j;
}

nlohmann::json to_json(const BiasSpec& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  j["amplitude"] = s.amplitude;
  j["zero_mean"] = s.zero_mean;
  j["polynomial"] = s.polynomial;
  j["blob_count"] = s.blob_count;
  j["blob_width"] = s.blob_width;
  j["seed"] = s.seed;
  return j;
}

}  // namespace biascorrect
