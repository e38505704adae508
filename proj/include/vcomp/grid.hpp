#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "vcomp/core.hpp"

namespace vcomp {

enum class GridKind : uint32_t {
  TSDF = 0,        // signed, voxel units: + known-empty, 0 surface, - unknown
  UnsignedDF = 1,  // nonnegative truncated distances
  Occupancy = 2,   // {0,1}
  Ternary = 3,     // {-1,0,+1}
  SignMask = 4,    // {0,1}, 1 = known
  AbsChannel = 5,  // nonnegative truncated magnitudes
};

inline const char* grid_kind_name(GridKind k) {
  switch (k) {
    case GridKind::TSDF: return "tsdf";
    case GridKind::UnsignedDF: return "udf";
    case GridKind::Occupancy: return "occ";
    case GridKind::Ternary: return "ternary";
    case GridKind::SignMask: return "sign";
    case GridKind::AbsChannel: return "abs";
  }
  return "?";
}

struct GridMeta {
  std::array<int, 3> dims{0, 0, 0};
  float voxel_size = 1.0f;  // meters per voxel
  Vec3 origin{};            // world position of the (0,0,0) voxel corner

  size_t voxel_count() const { return size_t(dims[0]) * dims[1] * dims[2]; }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }

  // Values live at voxel centers.
  Vec3 voxel_to_world(int x, int y, int z) const {
    if (!in_bounds(x, y, z)) throw std::out_of_range("voxel_to_world: index out of range");
    return {origin.x + (float(x) + 0.5f) * voxel_size, origin.y + (float(y) + 0.5f) * voxel_size,
            origin.z + (float(z) + 0.5f) * voxel_size};
  }

  // Continuous voxel coordinate; integer coordinates are voxel centers.
  Vec3 world_to_voxel(const Vec3& p) const {
    return {(p.x - origin.x) / voxel_size - 0.5f, (p.y - origin.y) / voxel_size - 0.5f,
            (p.z - origin.z) / voxel_size - 0.5f};
  }

  bool operator==(const GridMeta& o) const {
    return dims == o.dims && voxel_size == o.voxel_size && origin == o.origin;
  }
};

struct VoxelGrid {
  GridMeta meta;
  GridKind kind = GridKind::UnsignedDF;
  std::vector<float> values;  // x-fastest layout

  VoxelGrid() = default;
  VoxelGrid(GridMeta m, GridKind k, float fill = 0.0f)
      : meta(m), kind(k), values(m.voxel_count(), fill) {}

  size_t idx(int x, int y, int z) const {
    return (size_t(z) * meta.dims[1] + y) * meta.dims[0] + x;
  }
  float& at(int x, int y, int z) { return values[idx(x, y, z)]; }
  float at(int x, int y, int z) const { return values[idx(x, y, z)]; }

  float at_clamped(int x, int y, int z) const {
    x = std::clamp(x, 0, meta.dims[0] - 1);
    y = std::clamp(y, 0, meta.dims[1] - 1);
    z = std::clamp(z, 0, meta.dims[2] - 1);
    return values[idx(x, y, z)];
  }
};

struct TwoChannelGrid {
  VoxelGrid abs;    // AbsChannel
  VoxelGrid known;  // SignMask
};

// Splits a fused TSDF into magnitude and known-space channels. Zero is on the
// surface and counts as known.
inline TwoChannelGrid split_channels(const VoxelGrid& tsdf, float truncation = 2.5f) {
  if (tsdf.kind != GridKind::TSDF)
    throw std::invalid_argument("split_channels: input grid kind must be TSDF");
  TwoChannelGrid out;
  out.abs = VoxelGrid(tsdf.meta, GridKind::AbsChannel);
  out.known = VoxelGrid(tsdf.meta, GridKind::SignMask);
  for (size_t i = 0; i < tsdf.values.size(); ++i) {
    float v = tsdf.values[i];
    out.abs.values[i] = std::min(std::abs(v), truncation);
    out.known.values[i] = v >= 0.0f ? 1.0f : 0.0f;
  }
  return out;
}

inline VoxelGrid recombine_channels(const TwoChannelGrid& g) {
  if (!(g.abs.meta == g.known.meta))
    throw std::invalid_argument("recombine_channels: channel metas differ");
  VoxelGrid out(g.abs.meta, GridKind::TSDF);
  for (size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = g.abs.values[i] * (2.0f * g.known.values[i] - 1.0f);
  return out;
}

// Trilinear interpolation of the 8 surrounding voxel centers; p is a
// continuous voxel coordinate in [0, dims-1] per axis.
inline float trilinear_sample(const VoxelGrid& grid, const Vec3& p) {
  const auto& d = grid.meta.dims;
  if (p.x < 0.0f || p.y < 0.0f || p.z < 0.0f || p.x > float(d[0] - 1) || p.y > float(d[1] - 1) ||
      p.z > float(d[2] - 1))
    throw std::out_of_range("trilinear_sample: coordinate outside grid");
  int x0 = std::min(int(p.x), d[0] - 2 >= 0 ? d[0] - 2 : 0);
  int y0 = std::min(int(p.y), d[1] - 2 >= 0 ? d[1] - 2 : 0);
  int z0 = std::min(int(p.z), d[2] - 2 >= 0 ? d[2] - 2 : 0);
  if (d[0] == 1) x0 = 0;
  if (d[1] == 1) y0 = 0;
  if (d[2] == 1) z0 = 0;
  float fx = p.x - float(x0), fy = p.y - float(y0), fz = p.z - float(z0);
  int x1 = std::min(x0 + 1, d[0] - 1);
  int y1 = std::min(y0 + 1, d[1] - 1);
  int z1 = std::min(z0 + 1, d[2] - 1);

  auto v = [&](int x, int y, int z) { return grid.at(x, y, z); };
  float c00 = v(x0, y0, z0) * (1 - fx) + v(x1, y0, z0) * fx;
  float c10 = v(x0, y1, z0) * (1 - fx) + v(x1, y1, z0) * fx;
  float c01 = v(x0, y0, z1) * (1 - fx) + v(x1, y0, z1) * fx;
  float c11 = v(x0, y1, z1) * (1 - fx) + v(x1, y1, z1) * fx;
  float c0 = c00 * (1 - fy) + c10 * fy;
  float c1 = c01 * (1 - fy) + c11 * fy;
  return c0 * (1 - fz) + c1 * fz;
}

// Representation changes used by the input-encoding ablation.
inline VoxelGrid to_representation(const VoxelGrid& df, GridKind target, float iso_band) {
  if (df.kind != GridKind::TSDF && df.kind != GridKind::UnsignedDF)
    throw std::invalid_argument("to_representation: source must be TSDF or UnsignedDF");
  if (target == df.kind) return df;
  VoxelGrid out(df.meta, target);
  switch (target) {
    case GridKind::Occupancy:
      for (size_t i = 0; i < df.values.size(); ++i)
        out.values[i] = std::abs(df.values[i]) <= iso_band ? 1.0f : 0.0f;
      break;
    case GridKind::Ternary: {
      if (df.kind != GridKind::TSDF)
        throw std::invalid_argument("to_representation: ternary requires signed input");
      for (size_t i = 0; i < df.values.size(); ++i) {
        float v = df.values[i];
        out.values[i] = std::abs(v) <= iso_band ? 0.0f : (v > 0.0f ? 1.0f : -1.0f);
      }
      break;
    }
    case GridKind::UnsignedDF:
      for (size_t i = 0; i < df.values.size(); ++i) out.values[i] = std::abs(df.values[i]);
      break;
    default:
      throw std::invalid_argument("to_representation: unsupported target kind");
  }
  return out;
}

// Amanatides-Woo traversal: visits voxels pierced by the world-space segment
// from `from` to `to`. visit(x,y,z) returns false to stop early.
template <typename Visit>
inline void traverse_voxels(const GridMeta& meta, const Vec3& from, const Vec3& to, Visit&& visit) {
  DVec3 o = DVec3(from - meta.origin) / double(meta.voxel_size);
  DVec3 e = DVec3(to - meta.origin) / double(meta.voxel_size);
  DVec3 d = e - o;
  double len = norm(d);
  if (len == 0.0) return;
  d = d / len;

  std::array<int, 3> v{int(std::floor(o.x)), int(std::floor(o.y)), int(std::floor(o.z))};
  std::array<int, 3> step;
  std::array<double, 3> t_max, t_delta;
  for (int i = 0; i < 3; ++i) {
    if (d[i] > 0) {
      step[i] = 1;
      t_max[i] = (std::floor(o[i]) + 1.0 - o[i]) / d[i];
      t_delta[i] = 1.0 / d[i];
    } else if (d[i] < 0) {
      step[i] = -1;
      t_max[i] = (o[i] - std::floor(o[i])) / -d[i];
      t_delta[i] = -1.0 / d[i];
    } else {
      step[i] = 0;
      t_max[i] = 1e300;
      t_delta[i] = 1e300;
    }
  }

  double t = 0.0;
  while (t <= len) {
    if (meta.in_bounds(v[0], v[1], v[2])) {
      if (!visit(v[0], v[1], v[2])) return;
    }
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    t = t_max[axis];
    v[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
}

}  // namespace vcomp
