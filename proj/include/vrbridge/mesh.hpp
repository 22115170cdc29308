#pragma once

// Triangle meshes in model space (millimeters) and the parametric
// modification applied by the WEMModify-style node.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "vrbridge/error.hpp"
#include "vrbridge/xform.hpp"

namespace vrbridge::meshvol {

using xform::Vec3;

struct Vec2 {
  double u = 0.0, v = 0.0;
  constexpr bool operator==(const Vec2&) const = default;
};

using Face = std::array<std::uint32_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> normals;  // empty or one per vertex
  std::vector<Vec2> uvs;      // empty or one per vertex

  bool has_normals() const { return !normals.empty(); }
  bool has_uvs() const { return !uvs.empty(); }
  bool operator==(const TriangleMesh&) const = default;
};

struct Aabb {
  Vec3 min, max;
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return (min + max) * 0.5; }
};

/// Throws ParseError describing the first violated mesh invariant.
inline void check_mesh(const TriangleMesh& m) {
  const auto n = m.vertices.size();
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    const Face& f = m.faces[i];
    if (f[0] >= n || f[1] >= n || f[2] >= n)
      fail(ErrorCode::ParseError, "face " + std::to_string(i) + " references a vertex out of range");
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
      fail(ErrorCode::ParseError, "face " + std::to_string(i) + " is degenerate");
  }
  if (!m.normals.empty() && m.normals.size() != n) fail(ErrorCode::ParseError, "normal count differs from vertex count");
  if (!m.uvs.empty() && m.uvs.size() != n) fail(ErrorCode::ParseError, "uv count differs from vertex count");
  for (const Vec3& v : m.vertices)
    if (!xform::is_finite(v)) fail(ErrorCode::ParseError, "non-finite vertex coordinate");
}

inline Aabb bounding_box(const TriangleMesh& m) {
  if (m.vertices.empty() || m.faces.empty()) fail(ErrorCode::EmptyMesh, "bounding_box of an empty mesh");
  constexpr double inf = std::numeric_limits<double>::infinity();
  Aabb box{{inf, inf, inf}, {-inf, -inf, -inf}};
  for (const Vec3& v : m.vertices) {
    box.min = {std::min(box.min.x, v.x), std::min(box.min.y, v.y), std::min(box.min.z, v.z)};
    box.max = {std::max(box.max.x, v.x), std::max(box.max.y, v.y), std::max(box.max.z, v.z)};
  }
  return box;
}

/// Area-weighted vertex normals. Vertices with no incident area get +Z.
inline TriangleMesh compute_normals(TriangleMesh m) {
  if (m.faces.empty()) fail(ErrorCode::EmptyMesh, "compute_normals of an empty mesh");
  std::vector<Vec3> acc(m.vertices.size());
  for (const Face& f : m.faces) {
    const Vec3& a = m.vertices[f[0]];
    const Vec3 n = xform::cross(m.vertices[f[1]] - a, m.vertices[f[2]] - a);  // |n| = 2 * area
    for (auto i : f) acc[i] += n;
  }
  for (Vec3& n : acc) {
    const double len = xform::norm(n);
    n = len > 0.0 ? n / len : Vec3{0.0, 0.0, 1.0};
  }
  m.normals = std::move(acc);
  return m;
}

inline bool normals_usable(const TriangleMesh& m) {
  if (m.normals.size() != m.vertices.size()) return false;
  return std::all_of(m.normals.begin(), m.normals.end(),
                     [](const Vec3& n) { return std::abs(xform::norm(n) - 1.0) <= 1e-6; });
}

/// Drops faces with repeated indices.
inline void drop_degenerate_faces(TriangleMesh& m) {
  std::erase_if(m.faces, [](const Face& f) { return f[0] == f[1] || f[1] == f[2] || f[0] == f[2]; });
}

// --- WEMModify ---

inline double normalize_degrees(double deg) {
  double r = std::fmod(deg, 360.0);
  if (r <= -180.0) r += 360.0;
  if (r > 180.0) r -= 360.0;
  return r;
}

struct ModifyParams {
  double xRotationDeg = 0.0;
  double scaleFactor = 1.0;
  double tx = 0.0, ty = 0.0, tz = 0.0;  // millimeters

  bool is_identity() const {
    return normalize_degrees(xRotationDeg) == 0.0 && scaleFactor == 1.0 && tx == 0.0 && ty == 0.0 && tz == 0.0;
  }
};

/// v -> Rx(xRotationDeg) * (scaleFactor * v) + t. Faces are untouched.
inline TriangleMesh modify_mesh(TriangleMesh m, const ModifyParams& p) {
  if (!(p.scaleFactor > 0.0) || !std::isfinite(p.scaleFactor))
    fail(ErrorCode::ConfigError, "Scalefactor must be positive");
  if (p.is_identity()) return m;
  const double deg = normalize_degrees(p.xRotationDeg);
  const bool rotate = deg != 0.0;
  const xform::Mat4 rot = xform::rotation_matrix(xform::rotation_x_deg(deg));
  const Vec3 t{p.tx, p.ty, p.tz};
  for (Vec3& v : m.vertices) {
    Vec3 s = v * p.scaleFactor;
    if (rotate) s = rot.transform_dir(s);
    v = s + t;
  }
  if (rotate)
    for (Vec3& n : m.normals) n = xform::normalized(rot.transform_dir(n));
  return m;
}

// --- procedural meshes ---

/// Axis-aligned cube [0,size]^3 with 8 shared vertices and 12 outward-wound faces.
inline TriangleMesh make_cube(double size = 1.0) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1) ? size : 0.0, (i & 2) ? size : 0.0, (i & 4) ? size : 0.0});
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return compute_normals(std::move(m));
}

/// Latitude/longitude sphere centered at the origin with
/// 2 * slices * (stacks - 1) triangles, per-vertex normals and uvs.
inline TriangleMesh make_uv_sphere(double radius, int stacks, int slices) {
  if (stacks < 2 || slices < 3) fail(ErrorCode::ConfigError, "uv sphere needs stacks >= 2 and slices >= 3");
  TriangleMesh m;
  const double pi = std::numbers::pi;
  // Poles are single vertices; rings 1..stacks-1 have `slices + 1` vertices (seam duplicated for uvs).
  m.vertices.push_back({0.0, radius, 0.0});
  m.uvs.push_back({0.5, 0.0});
  for (int i = 1; i < stacks; ++i) {
    const double phi = pi * i / stacks;
    for (int j = 0; j <= slices; ++j) {
      const double theta = 2.0 * pi * j / slices;
      m.vertices.push_back({radius * std::sin(phi) * std::cos(theta), radius * std::cos(phi),
                            -radius * std::sin(phi) * std::sin(theta)});
      m.uvs.push_back({static_cast<double>(j) / slices, static_cast<double>(i) / stacks});
    }
  }
  m.vertices.push_back({0.0, -radius, 0.0});
  m.uvs.push_back({0.5, 1.0});
  const auto ring = [&](int i, int j) { return static_cast<std::uint32_t>(1 + (i - 1) * (slices + 1) + j); };
  const auto south = static_cast<std::uint32_t>(m.vertices.size() - 1);
  for (int j = 0; j < slices; ++j) m.faces.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i < stacks - 1; ++i)
    for (int j = 0; j < slices; ++j) {
      m.faces.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  for (int j = 0; j < slices; ++j) m.faces.push_back({ring(stacks - 1, j), south, ring(stacks - 1, j + 1)});
  m.normals.reserve(m.vertices.size());
  for (const Vec3& v : m.vertices) m.normals.push_back(xform::normalized(v));
  return m;
}

}  // namespace vrbridge::meshvol
