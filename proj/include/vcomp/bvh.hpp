#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "vcomp/mesh.hpp"

namespace vcomp {

struct RayHit {
  double t = -1.0;       // distance along the unit direction
  int triangle = -1;
  bool valid() const { return t >= 0.0; }
};

// Median-split AABB tree over triangles. Build order is fixed, so traversal
// results are reproducible run to run.
class TriangleBvh {
 public:
  TriangleBvh() = default;

  explicit TriangleBvh(const TriMesh& mesh) : mesh_(&mesh) {
    size_t n = mesh.triangles.size();
    tri_order_.resize(n);
    std::iota(tri_order_.begin(), tri_order_.end(), 0u);
    centroids_.resize(n);
    tri_bounds_.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const auto& t = mesh.triangles[i];
      Aabb b;
      b.expand(mesh.vertices[t[0]]);
      b.expand(mesh.vertices[t[1]]);
      b.expand(mesh.vertices[t[2]]);
      tri_bounds_[i] = b;
      centroids_[i] = b.center();
    }
    nodes_.reserve(2 * n);
    if (n > 0) build(0, n);
  }

  // Nearest intersection with t in (t_min, t_max].
  RayHit intersect(const DVec3& orig, const DVec3& dir, double t_max = 1e300,
                   double t_min = 1e-9) const {
    RayHit best;
    if (nodes_.empty()) return best;
    best.t = t_max;
    bool found = false;
    DVec3 inv{dir.x != 0 ? 1.0 / dir.x : 1e300, dir.y != 0 ? 1.0 / dir.y : 1e300,
              dir.z != 0 ? 1.0 / dir.z : 1e300};
    std::vector<uint32_t> stack;
    stack.push_back(0);
    while (!stack.empty()) {
      const Node& node = nodes_[stack.back()];
      stack.pop_back();
      if (!slab_hit(node.bounds, orig, inv, best.t)) continue;
      if (node.count > 0) {
        for (uint32_t i = node.first; i < node.first + node.count; ++i) {
          uint32_t tri = tri_order_[i];
          const auto& tv = mesh_->triangles[tri];
          double t = ray_triangle(orig, dir, DVec3(mesh_->vertices[tv[0]]),
                                  DVec3(mesh_->vertices[tv[1]]), DVec3(mesh_->vertices[tv[2]]));
          if (t > t_min && t < best.t) {
            best.t = t;
            best.triangle = int(tri);
            found = true;
          }
        }
      } else {
        stack.push_back(node.left);
        stack.push_back(node.first);  // right child index for interior nodes
      }
    }
    if (!found) best.t = -1.0;
    return best;
  }

  const TriMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Aabb bounds;
    uint32_t left = 0;   // index of first child when count == 0
    uint32_t first = 0;  // first triangle in tri_order_ when leaf
    uint32_t count = 0;  // 0 for interior nodes
  };

  static bool slab_hit(const Aabb& b, const DVec3& o, const DVec3& inv, double t_best) {
    double t0 = 0.0, t1 = t_best;
    for (int i = 0; i < 3; ++i) {
      double lo = (double(b.lo[i]) - o[i]) * inv[i];
      double hi = (double(b.hi[i]) - o[i]) * inv[i];
      if (lo > hi) std::swap(lo, hi);
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
      if (t0 > t1) return false;
    }
    return true;
  }

  uint32_t build(size_t begin, size_t end) {
    uint32_t idx = uint32_t(nodes_.size());
    nodes_.emplace_back();
    Aabb bounds;
    for (size_t i = begin; i < end; ++i) bounds.expand(tri_bounds_[tri_order_[i]]);
    nodes_[idx].bounds = bounds;
    size_t count = end - begin;
    if (count <= 4) {
      nodes_[idx].first = uint32_t(begin);
      nodes_[idx].count = uint32_t(count);
      return idx;
    }
    Vec3 ext = bounds.extent();
    int axis = 0;
    if (ext.y > ext.x) axis = 1;
    if (ext.z > ext[axis]) axis = 2;
    size_t mid = begin + count / 2;
    std::nth_element(tri_order_.begin() + begin, tri_order_.begin() + mid,
                     tri_order_.begin() + end, [&](uint32_t a, uint32_t b) {
                       if (centroids_[a][axis] != centroids_[b][axis])
                         return centroids_[a][axis] < centroids_[b][axis];
                       return a < b;
                     });
    uint32_t left = build(begin, mid);
    uint32_t right = build(mid, end);
    nodes_[idx].left = left;
    nodes_[idx].first = right;
    nodes_[idx].count = 0;
    return idx;
  }

  const TriMesh* mesh_ = nullptr;
  std::vector<uint32_t> tri_order_;
  std::vector<Vec3> centroids_;
  std::vector<Aabb> tri_bounds_;
  std::vector<Node> nodes_;
};

}  // namespace vcomp
