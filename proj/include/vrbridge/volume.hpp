#pragma once

// Scalar volumes (int16, x-fastest) with a JSON sidecar header, plus the
// synthetic phantoms that stand in for CT data.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrbridge/error.hpp"
#include "vrbridge/xform.hpp"

namespace vrbridge::meshvol {

struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  xform::Vec3 spacing{1.0, 1.0, 1.0};  // millimeters per voxel
  std::vector<std::int16_t> scalars;

  Volume() = default;
  Volume(std::array<int, 3> d, xform::Vec3 s, std::int16_t fill = 0) : dims(d), spacing(s) {
    if (d[0] <= 0 || d[1] <= 0 || d[2] <= 0) fail(ErrorCode::HeaderError, "volume dims must be positive");
    if (!(s.x > 0.0 && s.y > 0.0 && s.z > 0.0)) fail(ErrorCode::HeaderError, "volume spacing must be positive");
    scalars.assign(voxel_count(), fill);
  }

  std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(z));
  }
  std::int16_t at(int x, int y, int z) const { return scalars[index(x, y, z)]; }
  std::int16_t& at(int x, int y, int z) { return scalars[index(x, y, z)]; }

  bool operator==(const Volume&) const = default;
};

/// Reads {"dims":[nx,ny,nz],"spacing_mm":[sx,sy,sz],"raw":"<path>","scalar":"int16-le"}.
/// A relative raw path resolves against the header's directory.
inline Volume load_volume(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  if (!in) fail(ErrorCode::Io, "cannot open volume header " + header_path.string());
  nlohmann::json h;
  try {
    in >> h;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::HeaderError, "volume header is not valid JSON: " + std::string(e.what()));
  }
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!h.is_object() || !h.contains(key)) fail(ErrorCode::HeaderError, std::string("volume header lacks \"") + key + "\"");
    return h[key];
  };
  const auto& jd = require("dims");
  const auto& js = require("spacing_mm");
  const auto& jr = require("raw");
  const auto& jt = require("scalar");
  if (!jd.is_array() || jd.size() != 3) fail(ErrorCode::HeaderError, "dims must be an array of 3 integers");
  if (!js.is_array() || js.size() != 3) fail(ErrorCode::HeaderError, "spacing_mm must be an array of 3 numbers");
  if (!jr.is_string()) fail(ErrorCode::HeaderError, "raw must be a string path");
  if (!jt.is_string() || jt.get<std::string>() != "int16-le")
    fail(ErrorCode::HeaderError, "only scalar type \"int16-le\" is supported");
  std::array<int, 3> dims{};
  xform::Vec3 spacing;
  for (int i = 0; i < 3; ++i) {
    if (!jd[i].is_number_integer() || jd[i].get<long long>() <= 0 || jd[i].get<long long>() > (1 << 20))
      fail(ErrorCode::HeaderError, "dims entries must be positive integers");
    dims[static_cast<std::size_t>(i)] = jd[i].get<int>();
    if (!js[i].is_number() || !(js[i].get<double>() > 0.0))
      fail(ErrorCode::HeaderError, "spacing_mm entries must be positive");
  }
  spacing = {js[0].get<double>(), js[1].get<double>(), js[2].get<double>()};

  std::filesystem::path raw = jr.get<std::string>();
  if (raw.is_relative()) raw = header_path.parent_path() / raw;
  Volume v(dims, spacing);
  const std::uintmax_t expected = v.voxel_count() * 2;
  std::error_code ec;
  const std::uintmax_t actual = std::filesystem::file_size(raw, ec);
  if (ec) fail(ErrorCode::Io, "cannot open raw volume " + raw.string());
  if (actual != expected)
    fail(ErrorCode::SizeMismatch,
         raw.string() + " holds " + std::to_string(actual) + " bytes, expected " + std::to_string(expected));
  std::ifstream rin(raw, std::ios::binary);
  if (!rin) fail(ErrorCode::Io, "cannot open raw volume " + raw.string());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(expected));
  rin.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::uintmax_t>(rin.gcount()) != expected) fail(ErrorCode::Io, "short read on " + raw.string());
  for (std::size_t i = 0; i < v.scalars.size(); ++i)
    v.scalars[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(bytes[2 * i] | (bytes[2 * i + 1] << 8)));
  return v;
}

/// Writes header + raw side by side; the header references the raw by file name.
inline void save_volume(const Volume& v, const std::filesystem::path& header_path) {
  std::filesystem::path raw = header_path;
  raw.replace_extension(".raw");
  nlohmann::json h = {{"dims", v.dims},
                      {"spacing_mm", {v.spacing.x, v.spacing.y, v.spacing.z}},
                      {"raw", raw.filename().string()},
                      {"scalar", "int16-le"}};
  std::ofstream hout(header_path, std::ios::trunc);
  if (!hout) fail(ErrorCode::Io, "cannot write " + header_path.string());
  hout << h.dump(2) << "\n";
  std::string bytes;
  bytes.reserve(v.scalars.size() * 2);
  for (std::int16_t s : v.scalars) {
    const auto u = static_cast<std::uint16_t>(s);
    bytes.push_back(static_cast<char>(u & 0xff));
    bytes.push_back(static_cast<char>(u >> 8));
  }
  std::ofstream rout(raw, std::ios::binary | std::ios::trunc);
  if (!rout) fail(ErrorCode::Io, "cannot write " + raw.string());
  rout.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Binary mask: 1 where the voxel exceeds t, else 0.
inline Volume threshold(const Volume& v, double t) {
  Volume out = v;
  for (auto& s : out.scalars) s = static_cast<double>(s) > t ? 1 : 0;
  return out;
}

inline std::size_t count_nonzero(const Volume& v) {
  std::size_t n = 0;
  for (auto s : v.scalars) n += s != 0;
  return n;
}

/// Ball of `value` centered in an n^3 grid over a zero background.
inline Volume make_sphere_phantom(int n, double radius_vox, std::int16_t value = 1000) {
  Volume v({n, n, n}, {1.0, 1.0, 1.0});
  const double c = 0.5 * (n - 1);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c));
        v.at(x, y, z) = d <= radius_vox ? value : 0;
      }
  return v;
}

/// Linear radial falloff value * (1 - d/R), clamped at 0; iso-levels
/// are concentric spheres, useful for normal-direction checks.
inline Volume make_radial_phantom(int n, double radius_vox, std::int16_t value = 1000) {
  Volume v({n, n, n}, {1.0, 1.0, 1.0});
  const double c = 0.5 * (n - 1);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double d = std::sqrt((x - c) * (x - c) + (y - c) * (y - c) + (z - c) * (z - c));
        const double f = std::clamp(1.0 - d / radius_vox, 0.0, 1.0);
        v.at(x, y, z) = static_cast<std::int16_t>(std::lround(value * f));
      }
  return v;
}

/// Hollow skull-like shell: outer ball minus inner ball, with two orbit holes.
inline Volume make_skull_phantom(int n) {
  Volume v({n, n, n}, {1.0, 1.0, 1.0});
  const double c = 0.5 * (n - 1);
  const double outer = 0.42 * n, inner = 0.34 * n, orbit = 0.09 * n;
  const xform::Vec3 eyes[2] = {{c - 0.15 * n, c + 0.05 * n, c + 0.38 * n}, {c + 0.15 * n, c + 0.05 * n, c + 0.38 * n}};
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const xform::Vec3 p{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
        const double d = xform::norm(p - xform::Vec3{c, c, c});
        bool bone = d <= outer && d >= inner;
        for (const auto& e : eyes)
          if (xform::norm(p - e) <= orbit) bone = false;
        v.at(x, y, z) = bone ? 1200 : 0;
      }
  return v;
}

}  // namespace vrbridge::meshvol
