#pragma once

#include <array>
#include <vector>

#include "vcomp/grid.hpp"

namespace vcomp {

// Dense channel-major volume (x fastest within a channel).
template <typename T>
struct Tensor4 {
  int channels = 0;
  std::array<int, 3> dims{0, 0, 0};
  std::vector<T> values;

  Tensor4() = default;
  Tensor4(int c, std::array<int, 3> d, T fill = T(0))
      : channels(c), dims(d), values(size_t(c) * d[0] * d[1] * d[2], fill) {}

  size_t spatial_size() const { return size_t(dims[0]) * dims[1] * dims[2]; }
  size_t size() const { return size_t(channels) * spatial_size(); }

  size_t idx(int c, int x, int y, int z) const {
    return ((size_t(c) * dims[2] + z) * dims[1] + y) * dims[0] + x;
  }
  T& at(int c, int x, int y, int z) { return values[idx(c, x, y, z)]; }
  const T& at(int c, int x, int y, int z) const { return values[idx(c, x, y, z)]; }

  T* channel(int c) { return values.data() + size_t(c) * spatial_size(); }
  const T* channel(int c) const { return values.data() + size_t(c) * spatial_size(); }

  bool same_shape(const Tensor4& o) const { return channels == o.channels && dims == o.dims; }

  void fill(T v) { std::fill(values.begin(), values.end(), v); }
};

template <typename T>
Tensor4<T> grid_to_tensor(const VoxelGrid& g) {
  Tensor4<T> t(1, g.meta.dims);
  for (size_t i = 0; i < g.values.size(); ++i) t.values[i] = T(g.values[i]);
  return t;
}

template <typename T>
VoxelGrid tensor_to_grid(const Tensor4<T>& t, const GridMeta& meta, GridKind kind) {
  if (t.channels != 1 || t.dims != meta.dims)
    throw std::invalid_argument("tensor_to_grid: shape mismatch");
  VoxelGrid g(meta, kind);
  for (size_t i = 0; i < g.values.size(); ++i) g.values[i] = float(t.values[i]);
  return g;
}

// Concatenates b's channels after a's.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.dims != b.dims) throw std::invalid_argument("concat_channels: spatial dims differ");
  Tensor4<T> out(a.channels + b.channels, a.dims);
  std::copy(a.values.begin(), a.values.end(), out.values.begin());
  std::copy(b.values.begin(), b.values.end(), out.values.begin() + std::ptrdiff_t(a.size()));
  return out;
}

}  // namespace vcomp
