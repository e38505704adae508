#pragma once

#include <unordered_map>

#include "vcomp/grid.hpp"
#include "vcomp/marching_cubes_tables.hpp"
#include "vcomp/mesh.hpp"

namespace vcomp {

struct IsoParams {
  float iso = 0.5f;  // level value in voxel units; must be > 0 for unsigned fields
  GridKind source = GridKind::UnsignedDF;
};

namespace detail {

// Corner offsets and the edges between them, in the standard table order.
inline constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                      {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
inline constexpr int kEdgeEnds[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                         {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace detail

// Standard marching cubes over voxel-center samples with linear edge
// interpolation and shared vertices per grid edge. For unsigned fields the
// scalar is (value - iso); for signed fields the iso value marks the
// zero-crossing, with the negative (unknown / interior) side treated as
// inside so triangles face outward into known-empty space. A field entirely
// on one side of the iso level yields an empty mesh.
inline TriMesh marching_cubes(const VoxelGrid& df, const IsoParams& params) {
  const auto& d = df.meta.dims;
  if (d[0] < 2 || d[1] < 2 || d[2] < 2)
    throw std::invalid_argument("marching_cubes: grid must be at least 2 voxels per axis");
  if (df.kind == GridKind::UnsignedDF && params.iso <= 0.0f)
    throw std::invalid_argument("marching_cubes: unsigned fields need iso > 0");

  TriMesh mesh;
  std::unordered_map<uint64_t, uint32_t> edge_vertices;

  // Canonical edge key: owning voxel index and axis.
  auto edge_key = [&](int x, int y, int z, int axis) {
    return (uint64_t(df.idx(x, y, z)) << 2) | uint64_t(axis);
  };

  auto scalar = [&](int x, int y, int z) { return df.at(x, y, z) - params.iso; };

  float corner_val[8];
  for (int z = 0; z + 1 < d[2]; ++z) {
    for (int y = 0; y + 1 < d[1]; ++y) {
      for (int x = 0; x + 1 < d[0]; ++x) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          corner_val[c] = scalar(x + detail::kCorner[c][0], y + detail::kCorner[c][1],
                                 z + detail::kCorner[c][2]);
          if (corner_val[c] < 0.0f) config |= 1 << c;
        }
        uint16_t edges = kMcEdgeTable[size_t(config)];
        if (edges == 0) continue;

        uint32_t edge_vert[12];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          int ca = detail::kEdgeEnds[e][0], cb = detail::kEdgeEnds[e][1];
          int ax = detail::kCorner[ca][0], ay = detail::kCorner[ca][1], az = detail::kCorner[ca][2];
          int bx = detail::kCorner[cb][0], by = detail::kCorner[cb][1], bz = detail::kCorner[cb][2];
          int axis = (ax != bx) ? 0 : (ay != by ? 1 : 2);
          int ox = x + std::min(ax, bx), oy = y + std::min(ay, by), oz = z + std::min(az, bz);
          uint64_t key = edge_key(ox, oy, oz, axis);
          auto it = edge_vertices.find(key);
          if (it != edge_vertices.end()) {
            edge_vert[e] = it->second;
            continue;
          }
          float va = corner_val[ca], vb = corner_val[cb];
          float t = va == vb ? 0.5f : va / (va - vb);
          // Keep vertices strictly off the corners; exact-zero corner values
          // would otherwise collapse several edges onto one point and break
          // the edge pairing of the output.
          t = std::clamp(t, 1e-4f, 1.0f - 1e-4f);
          // Orient t along the +axis direction from the owning corner.
          bool a_is_owner = (ax <= bx && ay <= by && az <= bz);
          float tt = a_is_owner ? t : 1.0f - t;
          Vec3 p{df.meta.origin.x + (float(ox) + 0.5f + (axis == 0 ? tt : 0.0f)) * df.meta.voxel_size,
                 df.meta.origin.y + (float(oy) + 0.5f + (axis == 1 ? tt : 0.0f)) * df.meta.voxel_size,
                 df.meta.origin.z + (float(oz) + 0.5f + (axis == 2 ? tt : 0.0f)) * df.meta.voxel_size};
          uint32_t id = uint32_t(mesh.vertices.size());
          mesh.vertices.push_back(p);
          edge_vertices.emplace(key, id);
          edge_vert[e] = id;
        }

        const auto& tri = kMcTriTable[size_t(config)];
        for (int i = 0; tri[size_t(i)] >= 0; i += 3) {
          uint32_t a = edge_vert[tri[size_t(i)]];
          uint32_t b = edge_vert[tri[size_t(i + 1)]];
          uint32_t c = edge_vert[tri[size_t(i + 2)]];
          if (a == b || b == c || a == c) continue;
          mesh.triangles.push_back({a, c, b});  // wind outward toward positive scalar
        }
      }
    }
  }
  clean_mesh(mesh, 1e-10);
  return mesh;
}

// Test-side helper shared with the acceptance suite: every edge of a closed
// 2-manifold is used by exactly two triangles.
inline bool is_two_manifold(const TriMesh& mesh) {
  std::unordered_map<uint64_t, int> edge_count;
  for (const auto& t : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      uint32_t a = t[size_t(i)], b = t[size_t((i + 1) % 3)];
      uint64_t key = (uint64_t(std::min(a, b)) << 32) | std::max(a, b);
      ++edge_count[key];
    }
  }
  for (const auto& [key, count] : edge_count)
    if (count != 2) return false;
  return !mesh.triangles.empty();
}

}  // namespace vcomp
