#pragma once

// Flattened scene description handed from the dataflow network to the renderer.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vrbridge/mesh.hpp"
#include "vrbridge/xform.hpp"

namespace vrbridge::render {

struct Rgba8 {
  std::uint8_t r = 0, g = 0, b = 0, a = 255;
  constexpr bool operator==(const Rgba8&) const = default;
};

/// Parses "#rrggbb" or "#rrggbbaa".
inline std::optional<Rgba8> parse_color(const std::string& s) {
  if ((s.size() != 7 && s.size() != 9) || s[0] != '#') return std::nullopt;
  auto hex = [&](std::size_t i) -> int {
    int v = 0;
    for (std::size_t k = i; k < i + 2; ++k) {
      const char c = s[k];
      v *= 16;
      if (c >= '0' && c <= '9') v += c - '0';
      else if (c >= 'a' && c <= 'f') v += c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') v += c - 'A' + 10;
      else return -1;
    }
    return v;
  };
  int parts[4] = {hex(1), hex(3), hex(5), s.size() == 9 ? hex(7) : 255};
  for (int p : parts)
    if (p < 0) return std::nullopt;
  return Rgba8{static_cast<std::uint8_t>(parts[0]), static_cast<std::uint8_t>(parts[1]),
               static_cast<std::uint8_t>(parts[2]), static_cast<std::uint8_t>(parts[3])};
}

enum class Shading { Flat, Lambert };

struct Material {
  Rgba8 baseColor{216, 208, 192, 255};
  Shading shading = Shading::Lambert;
  bool textured = false;
};

struct SceneItem {
  std::shared_ptr<const meshvol::TriangleMesh> mesh;
  xform::Mat4 modelToWorld;  // rigid or rigid times uniform scale
  Material material;
};

struct Scene {
  std::vector<SceneItem> items;
  Rgba8 background{24, 26, 32, 255};
  // Head pose for the companion view when the network supplies one.
  std::optional<xform::Mat4> companionPose;
};

}  // namespace vrbridge::render
