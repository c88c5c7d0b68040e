#include "biascorrect/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

namespace biascorrect {

namespace {

constexpr int kFormatVersion = 1;
constexpr std::string_view kHeaderSuffix = ".vbf.json";

void check_spacing(const Spacing& s) {
  if (!(s.sx > 0.0 && s.sy > 0.0 && s.sz > 0.0) || !std::isfinite(s.sx) ||
      !std::isfinite(s.sy) || !std::isfinite(s.sz)) {
    throw ValidationError("spacing must be strictly positive and finite");
  }
}

struct Header {
  Dims dims;
  Spacing spacing;
  std::string dtype;
  std::filesystem::path data_path;
};

std::string base_name(const std::filesystem::path& header) {
  std::string name = header.filename().string();
  if (name.ends_with(kHeaderSuffix)) name.resize(name.size() - kHeaderSuffix.size());
  return name;
}

Header read_header(const std::filesystem::path& path) {
  const auto header_path = vbf_header_path(path);
  std::ifstream in(header_path);
  if (!in) throw IoError("cannot open volume header " + header_path.string());

  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed volume header " + header_path.string() + ": " + e.what());
  }

  Header h;
  try {
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ValidationError("unsupported VBF version " + j.at("version").dump());
    }
    const auto dims = j.at("dims").get<std::vector<long long>>();
    const auto spacing = j.at("spacing").get<std::vector<double>>();
    if (dims.size() != 3 || spacing.size() != 3) {
      throw ValidationError("dims and spacing must have three entries");
    }
    if (std::any_of(dims.begin(), dims.end(), [](long long d) { return d <= 0; })) {
      throw ValidationError("dims must be positive");
    }
    h.dims = {static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
              static_cast<std::size_t>(dims[2])};
    h.spacing = {spacing[0], spacing[1], spacing[2]};
    h.dtype = j.at("dtype").get<std::string>();
    h.data_path = header_path.parent_path() / j.at("data").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("invalid volume header " + header_path.string() + ": " + e.what());
  }
  check_spacing(h.spacing);
  return h;
}

std::vector<unsigned char> read_payload(const Header& h, std::size_t bytes_per_voxel) {
  std::ifstream in(h.data_path, std::ios::binary);
  if (!in) throw IoError("cannot open volume payload " + h.data_path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::size_t expected = h.dims.count() * bytes_per_voxel;
  if (bytes.size() != expected) {
    throw ValidationError("payload " + h.data_path.string() + " has " +
                          std::to_string(bytes.size()) + " bytes, header requires " +
                          std::to_string(expected));
  }
  return bytes;
}

void write_header(const std::filesystem::path& header_path, const Dims& dims,
                  const Spacing& spacing, const char* dtype, const std::string& raw_name) {
  nlohmann::ordered_json j;
  j["version"] = kFormatVersion;
  j["dims"] = {dims.nx, dims.ny, dims.nz};
  j["spacing"] = {spacing.sx, spacing.sy, spacing.sz};
  j["dtype"] = dtype;
  j["data"] = raw_name;
  std::ofstream out(header_path);
  if (!out) throw IoError("cannot write volume header " + header_path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing volume header " + header_path.string());
}

void write_payload(const std::filesystem::path& raw_path, std::span<const unsigned char> bytes) {
  std::ofstream out(raw_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write volume payload " + raw_path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing volume payload " + raw_path.string());
}

}  // namespace

Volume::Volume(Dims dims, Spacing spacing, float fill) : Grid<float>(dims, fill), spacing_(spacing) {
  check_spacing(spacing_);
}

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> data)
    : Grid<float>(dims, std::move(data)), spacing_(spacing) {
  check_spacing(spacing_);
}

std::size_t foreground_count(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; }));
}

Mask full_mask(const Dims& dims) { return Mask(dims, std::uint8_t{1}); }

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) throw ValidationError(std::string("dimension mismatch: ") + what);
}

SliceNeighbors neighbors_in_slice(std::size_t n, const Dims& dims) {
  SliceNeighbors out;
  const Index3 c = unflatten(n, dims);
  for (int dj = -1; dj <= 1; ++dj) {
    for (int di = -1; di <= 1; ++di) {
      if (di == 0 && dj == 0) continue;
      const auto i = static_cast<long long>(c.i) + di;
      const auto j = static_cast<long long>(c.j) + dj;
      if (i < 0 || j < 0 || i >= static_cast<long long>(dims.nx) ||
          j >= static_cast<long long>(dims.ny)) {
        continue;
      }
      out.index[out.count++] =
          dims.flatten(static_cast<std::size_t>(i), static_cast<std::size_t>(j), c.k);
    }
  }
  return out;
}

std::filesystem::path vbf_header_path(const std::filesystem::path& path) {
  if (path.filename().string().ends_with(kHeaderSuffix)) return path;
  auto p = path;
  p += std::string(kHeaderSuffix);
  return p;
}

Volume read_volume(const std::filesystem::path& path) {
  const Header h = read_header(path);
  if (h.dtype != "f32le") throw ValidationError("expected dtype f32le, got " + h.dtype);
  const auto bytes = read_payload(h, 4);

  std::vector<float> data(h.dims.count());
  for (std::size_t n = 0; n < data.size(); ++n) {
    const unsigned char* b = &bytes[4 * n];
    const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                               static_cast<std::uint32_t>(b[1]) << 8 |
                               static_cast<std::uint32_t>(b[2]) << 16 |
                               static_cast<std::uint32_t>(b[3]) << 24;
    data[n] = std::bit_cast<float>(bits);
    if (!std::isfinite(data[n])) {
      throw ValidationError("non-finite value at voxel " + std::to_string(n));
    }
  }
  return Volume(h.dims, h.spacing, std::move(data));
}

void write_volume(const Volume& v, const std::filesystem::path& path) {
  const auto header = vbf_header_path(path);
  const std::string raw_name = base_name(header) + ".raw";

  std::vector<unsigned char> bytes(4 * v.size());
  for (std::size_t n = 0; n < v.size(); ++n) {
    const auto bits = std::bit_cast<std::uint32_t>(v[n]);
    for (int b = 0; b < 4; ++b) bytes[4 * n + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  write_payload(header.parent_path() / raw_name, bytes);
  write_header(header, v.dims(), v.spacing(), "f32le", raw_name);
}

LabelVolume read_labels(const std::filesystem::path& path) {
  const Header h = read_header(path);
  if (h.dtype != "u8") throw ValidationError("expected dtype u8, got " + h.dtype);
  auto bytes = read_payload(h, 1);
  return LabelVolume(h.dims, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
}

void write_labels(const LabelVolume& labels, const std::filesystem::path& path, Spacing spacing) {
  check_spacing(spacing);
  const auto header = vbf_header_path(path);
  const std::string raw_name = base_name(header) + ".raw";
  const auto data = labels.data();
  write_payload(header.parent_path() / raw_name,
                std::span<const unsigned char>(data.data(), data.size()));
  write_header(header, labels.dims(), spacing, "u8", raw_name);
}

}  // namespace biascorrect
