#pragma once

// Software rasterizer for the per-eye and companion views, plus the lens
// distortion resample and the side-by-side stereo composite.
//
// Lighting is a directional headlight along the view axis.
// Clip space follows the usual GL convention (-w <= z <= w); window depth is
// ndc.z * 0.5 + 0.5, so the near plane maps to 0 and the far plane to 1.
// Only the near plane is clipped geometrically; the rest is scissoring.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "vrbridge/error.hpp"
#include "vrbridge/framebuffer.hpp"
#include "vrbridge/hmdsim.hpp"
#include "vrbridge/mesh.hpp"
#include "vrbridge/scene.hpp"
#include "vrbridge/xform.hpp"

namespace vrbridge::render {

using xform::Mat4;
using xform::Vec3;

struct EyeRenderDesc {
  Mat4 view;  // world -> eye
  Mat4 proj;
  int width = 0, height = 0;
};

inline constexpr double kAmbient = 0.15;
inline constexpr int kCheckerCells = 8;
inline constexpr double kCheckerDark = 0.55;

namespace detail {

struct ClipVert {
  double x, y, z, w;
  double shade, u, v;
};

inline ClipVert lerp(const ClipVert& a, const ClipVert& b, double t) {
  return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, a.z + (b.z - a.z) * t, a.w + (b.w - a.w) * t,
          a.shade + (b.shade - a.shade) * t, a.u + (b.u - a.u) * t, a.v + (b.v - a.v) * t};
}

struct ScreenVert {
  double x, y, z, iw;  // pixels (y down), ndc z, 1/w
  double shade, u, v;
};

inline std::uint8_t scale8(std::uint8_t c, double f) {
  const double v = std::clamp(static_cast<double>(c) * f, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::lround(v));
}

// Top-left ownership for triangles with positive edge-function area in y-down space.
inline bool top_left(const ScreenVert& a, const ScreenVert& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  return (dy == 0.0 && dx > 0.0) || dy < 0.0;
}

// Evaluated from a canonical endpoint order so that a shared edge gives
// exactly opposite values for its two triangles.
inline double edge(const ScreenVert& a, const ScreenVert& b, double px, double py) {
  const bool swap = b.y < a.y || (b.y == a.y && b.x < a.x);
  const ScreenVert& p = swap ? b : a;
  const ScreenVert& q = swap ? a : b;
  const double e = (q.x - p.x) * (py - p.y) - (q.y - p.y) * (px - p.x);
  return swap ? -e : e;
}

inline void raster_triangle(Framebuffer& fb, ScreenVert v0, ScreenVert v1, ScreenVert v2, const Material& mat) {
  double area = edge(v0, v1, v2.x, v2.y);
  if (area == 0.0 || !std::isfinite(area)) return;
  if (area < 0.0) {
    std::swap(v1, v2);
    area = -area;
  }
  const double minx = std::min({v0.x, v1.x, v2.x}), maxx = std::max({v0.x, v1.x, v2.x});
  const double miny = std::min({v0.y, v1.y, v2.y}), maxy = std::max({v0.y, v1.y, v2.y});
  const int x0 = std::max(0, static_cast<int>(std::ceil(minx - 0.5)));
  const int x1 = std::min(fb.width - 1, static_cast<int>(std::floor(maxx - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(miny - 0.5)));
  const int y1 = std::min(fb.height - 1, static_cast<int>(std::floor(maxy - 0.5)));
  if (x0 > x1 || y0 > y1) return;
  const bool tl0 = top_left(v1, v2), tl1 = top_left(v2, v0), tl2 = top_left(v0, v1);
  const double inv_area = 1.0 / area;
  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5;
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5;
      const double e0 = edge(v1, v2, px, py), e1 = edge(v2, v0, px, py), e2 = edge(v0, v1, px, py);
      if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) continue;
      if ((e0 == 0.0 && !tl0) || (e1 == 0.0 && !tl1) || (e2 == 0.0 && !tl2)) continue;
      const double b0 = e0 * inv_area, b1 = e1 * inv_area, b2 = e2 * inv_area;
      const double zn = b0 * v0.z + b1 * v1.z + b2 * v2.z;
      const double d = zn * 0.5 + 0.5;
      if (d < 0.0 || d > 1.0) continue;
      const float df = static_cast<float>(d);
      const std::size_t idx = fb.index(x, y);
      if (!(df < fb.depth[idx])) continue;
      // perspective-correct weights
      const double p0 = b0 * v0.iw, p1 = b1 * v1.iw, p2 = b2 * v2.iw;
      const double inv = 1.0 / (p0 + p1 + p2);
      double f = (p0 * v0.shade + p1 * v1.shade + p2 * v2.shade) * inv;
      if (mat.textured) {
        const double u = (p0 * v0.u + p1 * v1.u + p2 * v2.u) * inv;
        const double v = (p0 * v0.v + p1 * v1.v + p2 * v2.v) * inv;
        const auto cu = static_cast<long long>(std::floor(u * kCheckerCells));
        const auto cv = static_cast<long long>(std::floor(v * kCheckerCells));
        if ((cu + cv) & 1) f *= kCheckerDark;
      }
      fb.depth[idx] = df;
      std::uint8_t* px8 = &fb.color[idx * 4];
      px8[0] = scale8(mat.baseColor.r, f);
      px8[1] = scale8(mat.baseColor.g, f);
      px8[2] = scale8(mat.baseColor.b, f);
      px8[3] = 255;
    }
  }
}

inline ScreenVert to_screen(const ClipVert& c, int w, int h) {
  const double iw = 1.0 / c.w;
  const double nx = c.x * iw, ny = c.y * iw, nz = c.z * iw;
  return {(nx * 0.5 + 0.5) * w, (0.5 - ny * 0.5) * h, nz, iw, c.shade, c.u, c.v};
}

inline void draw_clipped(Framebuffer& fb, const ClipVert& a, const ClipVert& b, const ClipVert& c, const Material& mat) {
  // trivial rejects against the side and far planes
  auto out = [](const ClipVert& v, int plane) {
    switch (plane) {
      case 0: return v.x > v.w;
      case 1: return v.x < -v.w;
      case 2: return v.y > v.w;
      case 3: return v.y < -v.w;
      default: return v.z > v.w;
    }
  };
  for (int p = 0; p < 5; ++p)
    if (out(a, p) && out(b, p) && out(c, p)) return;

  const ClipVert in[3] = {a, b, c};
  auto inside = [](const ClipVert& v) { return v.z >= -v.w; };
  if (inside(a) && inside(b) && inside(c)) {
    raster_triangle(fb, to_screen(a, fb.width, fb.height), to_screen(b, fb.width, fb.height),
                    to_screen(c, fb.width, fb.height), mat);
    return;
  }
  std::array<ClipVert, 4> poly;
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const ClipVert& s = in[i];
    const ClipVert& e = in[(i + 1) % 3];
    const double ds = s.z + s.w, de = e.z + e.w;
    if (ds >= 0.0) poly[n++] = s;
    if ((ds >= 0.0) != (de >= 0.0)) poly[n++] = lerp(s, e, ds / (ds - de));
  }
  if (n < 3) return;
  std::array<ScreenVert, 4> sv;
  for (int i = 0; i < n; ++i) sv[i] = to_screen(poly[i], fb.width, fb.height);
  for (int i = 1; i + 1 < n; ++i) raster_triangle(fb, sv[0], sv[i], sv[i + 1], mat);
}

// Planar projection onto the two widest bounding-box axes.
inline std::vector<meshvol::Vec2> planar_uvs(const meshvol::TriangleMesh& m) {
  const auto box = meshvol::bounding_box(m);
  const Vec3 e = box.extent();
  const double ext[3] = {e.x, e.y, e.z};
  int drop = 0;
  for (int i = 1; i < 3; ++i)
    if (ext[i] < ext[drop]) drop = i;
  const int ua = drop == 0 ? 1 : 0, va = drop == 2 ? 1 : 2;
  auto comp = [](const Vec3& v, int i) { return i == 0 ? v.x : i == 1 ? v.y : v.z; };
  const double mins[3] = {box.min.x, box.min.y, box.min.z};
  std::vector<meshvol::Vec2> uv(m.vertices.size());
  for (std::size_t i = 0; i < uv.size(); ++i) {
    const double eu = ext[ua] > 0.0 ? ext[ua] : 1.0, ev = ext[va] > 0.0 ? ext[va] : 1.0;
    uv[i] = {(comp(m.vertices[i], ua) - mins[ua]) / eu, (comp(m.vertices[i], va) - mins[va]) / ev};
  }
  return uv;
}

inline void draw_item(Framebuffer& fb, const SceneItem& item, const EyeRenderDesc& desc) {
  if (!item.mesh || item.mesh->faces.empty()) return;
  const meshvol::TriangleMesh& m = *item.mesh;
  const Mat4 mv = desc.view * item.modelToWorld;
  const Mat4 mvp = desc.proj * mv;
  const bool lit = item.material.shading == Shading::Lambert;
  const bool smooth = lit && meshvol::normals_usable(m);
  std::vector<meshvol::Vec2> generated;
  const std::vector<meshvol::Vec2>* uvs = nullptr;
  if (item.material.textured) {
    if (m.uvs.size() == m.vertices.size()) {
      uvs = &m.uvs;
    } else {
      generated = planar_uvs(m);
      uvs = &generated;
    }
  }

  const std::size_t nv = m.vertices.size();
  std::vector<ClipVert> cv(nv);
  std::vector<Vec3> eye_pos(lit && !smooth ? nv : 0);
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& p = m.vertices[i];
    const double* a = mvp.m.data();
    ClipVert c{};
    c.x = a[0] * p.x + a[1] * p.y + a[2] * p.z + a[3];
    c.y = a[4] * p.x + a[5] * p.y + a[6] * p.z + a[7];
    c.z = a[8] * p.x + a[9] * p.y + a[10] * p.z + a[11];
    c.w = a[12] * p.x + a[13] * p.y + a[14] * p.z + a[15];
    c.shade = 1.0;
    if (uvs) {
      c.u = (*uvs)[i].u;
      c.v = (*uvs)[i].v;
    }
    if (lit && !smooth) eye_pos[i] = mv.transform_point(p);
    if (smooth) {
          const Vec3 n = xform::normalized(mv.transform_dir(m.normals[i]));
      c.shade = kAmbient + (1.0 - kAmbient) * std::abs(n.z);
    }
    cv[i] = c;
  }

  for (const auto& f : m.faces) {
    ClipVert a = cv[f[0]], b = cv[f[1]], c = cv[f[2]];
    if (lit && !smooth) {
      const Vec3 &pa = eye_pos[f[0]], &pb = eye_pos[f[1]], &pc = eye_pos[f[2]];
      const Vec3 n = xform::cross(pb - pa, pc - pa);
      const double nl = xform::norm(n);
      a.shade = b.shade = c.shade = kAmbient + (1.0 - kAmbient) * (nl > 0.0 ? std::abs(n.z) / nl : 1.0);
    }
    draw_clipped(fb, a, b, c, item.material);
  }
}

}  // namespace detail

inline Framebuffer render_scene_eye(const Scene& scene, const EyeRenderDesc& desc) {
  Framebuffer fb(desc.width, desc.height, scene.background);
  for (const auto& item : scene.items) detail::draw_item(fb, item, desc);
  return fb;
}

/// Eye transform for a head pose: view = inverse(headToWorld * eyeToHead).
inline EyeRenderDesc eye_desc(const hmd::HmdConfig& cfg, const Mat4& headToWorld, hmd::Eye eye) {
  const Mat4 eyeToWorld = headToWorld * xform::compose(hmd::eye_to_head(cfg, eye));
  return {xform::inverse_rigid(eyeToWorld), hmd::projection_matrix(cfg, eye), cfg.eyeWidthPx, cfg.eyeHeightPx};
}

/// Symmetric frustum with the headset's horizontal FOV at an arbitrary viewport.
inline EyeRenderDesc companion_desc(const hmd::HmdConfig& cfg, int width, int height) {
  hmd::HmdConfig c = cfg;
  c.eyeWidthPx = width;
  c.eyeHeightPx = height;
  return {Mat4::identity(), hmd::projection_matrix(c), width, height};
}

/// Undistorted view from the head itself, centered between the eyes.
inline Framebuffer render_companion(const Scene& scene, const xform::RigidTransform& headPose, const EyeRenderDesc& desc) {
  EyeRenderDesc d = desc;
  d.view = xform::inverse_rigid(xform::compose(headPose));
  return render_scene_eye(scene, d);
}

// ------------------------------------------------------------ distortion

inline double distortion_scale(double r, double k1, double k2) {
  const double r2 = r * r;
  return 1.0 + k1 * r2 + k2 * r2 * r2;
}

inline double distorted_radius(double r, double k1, double k2) { return r * distortion_scale(r, k1, k2); }

/// Bilinear sample at continuous pixel-index coordinates; nullopt outside the image.
inline std::optional<Rgba8> sample_bilinear(const Framebuffer& fb, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= fb.width - 1 && y <= fb.height - 1)) return std::nullopt;
  const int ix = std::min(static_cast<int>(x), fb.width - 1), iy = std::min(static_cast<int>(y), fb.height - 1);
  const int jx = std::min(ix + 1, fb.width - 1), jy = std::min(iy + 1, fb.height - 1);
  const double fx = x - ix, fy = y - iy;
  const std::uint8_t* c00 = &fb.color[fb.index(ix, iy) * 4];
  const std::uint8_t* c10 = &fb.color[fb.index(jx, iy) * 4];
  const std::uint8_t* c01 = &fb.color[fb.index(ix, jy) * 4];
  const std::uint8_t* c11 = &fb.color[fb.index(jx, jy) * 4];
  std::uint8_t out[4];
  for (int k = 0; k < 4; ++k) {
    const double top = c00[k] + (c10[k] - c00[k]) * fx;
    const double bot = c01[k] + (c11[k] - c01[k]) * fx;
    out[k] = static_cast<std::uint8_t>(std::lround(std::clamp(top + (bot - top) * fy, 0.0, 255.0)));
  }
  return Rgba8{out[0], out[1], out[2], out[3]};
}

/// Barrel pre-distortion: each output pixel pulls from radius r (1 + k1 r^2 + k2 r^4).
inline Framebuffer apply_distortion(const Framebuffer& src, double k1, double k2, Rgba8 background = {0, 0, 0, 255}) {
  Framebuffer out(src.width, src.height, background);
  const double cx = 0.5 * src.width, cy = 0.5 * src.height;
  const double unit = 0.5 * std::min(src.width, src.height);
  const double inv_unit2 = 1.0 / (unit * unit);
  for (int y = 0; y < src.height; ++y) {
    const double oy = y + 0.5 - cy;
    for (int x = 0; x < src.width; ++x) {
      const double ox = x + 0.5 - cx;
      const double r2 = (ox * ox + oy * oy) * inv_unit2;
      const double s = 1.0 + k1 * r2 + k2 * r2 * r2;
      // source pixel-center coordinates back to index space
      const auto c = sample_bilinear(src, cx + ox * s - 0.5, cy + oy * s - 0.5);
      if (c) out.set_pixel(x, y, *c);
    }
  }
  return out;
}

inline Framebuffer compose_side_by_side(const Framebuffer& left, const Framebuffer& right) {
  if (left.height != right.height)
    fail(ErrorCode::HeightMismatch, "eye heights differ: " + std::to_string(left.height) + " vs " + std::to_string(right.height));
  Framebuffer out(left.width + right.width, left.height);
  for (int y = 0; y < left.height; ++y) {
    const auto row = static_cast<std::size_t>(y);
    std::copy_n(&left.color[row * left.width * 4], left.width * 4, &out.color[row * out.width * 4]);
    std::copy_n(&right.color[row * right.width * 4], right.width * 4, &out.color[(row * out.width + left.width) * 4]);
    std::copy_n(&left.depth[row * left.width], left.width, &out.depth[row * out.width]);
    std::copy_n(&right.depth[row * right.width], right.width, &out.depth[row * out.width + left.width]);
  }
  return out;
}

}  // namespace vrbridge::render
