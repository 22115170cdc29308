#pragma once

// Marching-cubes iso-surface extraction using the classic case table.
// Voxels strictly above the iso value are inside; triangles wind so their
// normals point toward lower scalars (outward).

#include <array>
#include <cstdint>
#include <unordered_map>

#include "vrbridge/mc_tables.hpp"
#include "vrbridge/mesh.hpp"
#include "vrbridge/volume.hpp"

namespace vrbridge::meshvol {

namespace detail {

inline constexpr std::array<std::array<int, 3>, 8> kCornerOffset = {{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};

inline constexpr std::array<std::array<int, 2>, 12> kEdgeCorners = {{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

}  // namespace detail

/// Vertices are placed at grid index * spacing (millimeters). Each lattice
/// edge yields at most one shared vertex, so closed surfaces come out welded.
inline TriangleMesh isosurface(const Volume& v, double iso) {
  const int nx = v.dims[0], ny = v.dims[1], nz = v.dims[2];
  if (nx < 2 || ny < 2 || nz < 2) fail(ErrorCode::EmptySurface, "isosurface needs at least 2 samples per axis");

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on_edge = [&](int x, int y, int z, int edge) -> std::uint32_t {
    auto a = detail::kEdgeCorners[static_cast<std::size_t>(edge)][0];
    auto b = detail::kEdgeCorners[static_cast<std::size_t>(edge)][1];
    std::array<int, 3> pa{x + detail::kCornerOffset[static_cast<std::size_t>(a)][0],
                          y + detail::kCornerOffset[static_cast<std::size_t>(a)][1],
                          z + detail::kCornerOffset[static_cast<std::size_t>(a)][2]};
    std::array<int, 3> pb{x + detail::kCornerOffset[static_cast<std::size_t>(b)][0],
                          y + detail::kCornerOffset[static_cast<std::size_t>(b)][1],
                          z + detail::kCornerOffset[static_cast<std::size_t>(b)][2]};
    if (pb < pa) std::swap(pa, pb);  // canonical direction: lower lattice point first
    int axis = pa[0] != pb[0] ? 0 : (pa[1] != pb[1] ? 1 : 2);
    const std::uint64_t key = static_cast<std::uint64_t>(v.index(pa[0], pa[1], pa[2])) * 3 + static_cast<std::uint64_t>(axis);
    auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (inserted) {
      const double va = v.at(pa[0], pa[1], pa[2]);
      const double vb = v.at(pb[0], pb[1], pb[2]);
      const double t = (iso - va) / (vb - va);
      xform::Vec3 p{static_cast<double>(pa[0]), static_cast<double>(pa[1]), static_cast<double>(pa[2])};
      (axis == 0 ? p.x : axis == 1 ? p.y : p.z) += t;
      mesh.vertices.push_back({p.x * v.spacing.x, p.y * v.spacing.y, p.z * v.spacing.z});
    }
    return it->second;
  };

  for (int z = 0; z + 1 < nz; ++z)
    for (int y = 0; y + 1 < ny; ++y)
      for (int x = 0; x + 1 < nx; ++x) {
        unsigned cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = detail::kCornerOffset[static_cast<std::size_t>(c)];
          if (static_cast<double>(v.at(x + o[0], y + o[1], z + o[2])) <= iso) cube |= 1u << c;
        }
        if (detail::kEdgeTable[cube] == 0) continue;
        const auto& tris = detail::kTriTable[cube];
        for (std::size_t k = 0; tris[k] != -1; k += 3) {
          const std::uint32_t a = vertex_on_edge(x, y, z, tris[k]);
          const std::uint32_t b = vertex_on_edge(x, y, z, tris[k + 1]);
          const std::uint32_t c = vertex_on_edge(x, y, z, tris[k + 2]);
          mesh.faces.push_back({a, b, c});
        }
      }

  if (mesh.faces.empty()) fail(ErrorCode::EmptySurface, "no cell crosses the iso value");
  return compute_normals(std::move(mesh));
}

}  // namespace vrbridge::meshvol
