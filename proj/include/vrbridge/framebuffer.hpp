#pragma once

// RGBA8 color plus depth, row-major with the origin at the top-left pixel.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "vrbridge/error.hpp"
#include "vrbridge/scene.hpp"

namespace vrbridge::render {

struct Framebuffer {
  int width = 0, height = 0;
  std::vector<std::uint8_t> color;  // 4 bytes per pixel
  std::vector<float> depth;         // 1.0 = far plane

  Framebuffer() = default;
  Framebuffer(int w, int h, Rgba8 fill = {0, 0, 0, 255}) : width(w), height(h) {
    if (w <= 0 || h <= 0) fail(ErrorCode::ConfigError, "framebuffer dimensions must be positive");
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    color.resize(n * 4);
    depth.assign(n, 1.0f);
    clear(fill);
  }

  void clear(Rgba8 c) {
    for (std::size_t i = 0; i < color.size(); i += 4) {
      color[i] = c.r;
      color[i + 1] = c.g;
      color[i + 2] = c.b;
      color[i + 3] = c.a;
    }
    std::fill(depth.begin(), depth.end(), 1.0f);
  }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x); }

  Rgba8 pixel(int x, int y) const {
    const std::uint8_t* p = &color[index(x, y) * 4];
    return {p[0], p[1], p[2], p[3]};
  }
  void set_pixel(int x, int y, Rgba8 c) {
    std::uint8_t* p = &color[index(x, y) * 4];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
    p[3] = c.a;
  }
};

}  // namespace vrbridge::render
