#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include "vcomp/grid.hpp"

namespace vcomp {

// VXG1 container: magic "VXG1", then little-endian u32 kind, 3x u32 dims,
// f32 voxel_size, 3x f32 origin, then dims.x*dims.y*dims.z f32 values in
// x-fastest order.

namespace detail {
template <typename T>
void write_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4);
  os.write(reinterpret_cast<const char*>(&v), 4);
}
template <typename T>
T read_le(std::istream& is) {
  static_assert(sizeof(T) == 4);
  T v;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
}  // namespace detail

inline void write_vxg(const VoxelGrid& grid, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("write_vxg: cannot open " + path);
  os.write("VXG1", 4);
  detail::write_le<uint32_t>(os, static_cast<uint32_t>(grid.kind));
  for (int i = 0; i < 3; ++i) detail::write_le<uint32_t>(os, uint32_t(grid.meta.dims[i]));
  detail::write_le<float>(os, grid.meta.voxel_size);
  for (int i = 0; i < 3; ++i) detail::write_le<float>(os, grid.meta.origin[i]);
  os.write(reinterpret_cast<const char*>(grid.values.data()),
           std::streamsize(grid.values.size() * sizeof(float)));
  if (!os) throw DataError("write_vxg: write failed for " + path);
}

inline VoxelGrid read_vxg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("read_vxg: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "VXG1", 4) != 0)
    throw DataError("read_vxg: bad magic in " + path);
  VoxelGrid g;
  g.kind = static_cast<GridKind>(detail::read_le<uint32_t>(is));
  for (int i = 0; i < 3; ++i) g.meta.dims[i] = int(detail::read_le<uint32_t>(is));
  g.meta.voxel_size = detail::read_le<float>(is);
  for (int i = 0; i < 3; ++i) g.meta.origin[i] = detail::read_le<float>(is);
  if (g.meta.dims[0] <= 0 || g.meta.dims[1] <= 0 || g.meta.dims[2] <= 0)
    throw DataError("read_vxg: bad dims in " + path);
  g.values.resize(g.meta.voxel_count());
  is.read(reinterpret_cast<char*>(g.values.data()),
          std::streamsize(g.values.size() * sizeof(float)));
  if (!is) throw DataError("read_vxg: truncated file " + path);
  return g;
}

}  // namespace vcomp
