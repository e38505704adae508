#pragma once

#include <algorithm>
#include <numeric>
#include <queue>

#include "vcomp/core.hpp"

namespace vcomp {

// Kd-tree with best-bin-first search. The probe budget caps how many stored
// points a query may examine; an unlimited budget makes the search exact. A
// query equal to a stored point always descends into that point's leaf first,
// so exact hits are found regardless of the budget.
class KdAnnIndex {
 public:
  KdAnnIndex() = default;

  // points: n x dim, row-major. Copied in.
  KdAnnIndex(std::vector<float> points, int dim) : points_(std::move(points)), dim_(dim) {
    if (dim_ <= 0 || points_.size() % size_t(dim_) != 0)
      throw std::invalid_argument("KdAnnIndex: bad matrix shape");
    n_ = points_.size() / size_t(dim_);
    if (n_ == 0) throw std::invalid_argument("KdAnnIndex: empty candidate set");
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), uint32_t(0));
    nodes_.reserve(2 * n_ / kLeafSize + 2);
    build(0, n_);
  }

  size_t size() const { return n_; }

  struct Hit {
    uint32_t id = 0;      // row of the stored point
    float dist = -1.0f;   // Euclidean distance
  };

  // Best-bin-first with a probe budget. The first descent always reaches the
  // leaf a duplicate of the query would live in, so exact hits come back at
  // distance zero; otherwise quality degrades gracefully with the budget.
  Hit query(const float* q, size_t max_visits = SIZE_MAX) const {
    if (max_visits >= n_) return query_exact(q);
    struct Pending {
      double bound;
      uint32_t node;
      bool operator>(const Pending& o) const {
        if (bound != o.bound) return bound > o.bound;
        return node > o.node;
      }
    };
    std::priority_queue<Pending, std::vector<Pending>, std::greater<Pending>> queue;
    queue.push({0.0, 0});
    double best_d2 = 1e300;
    uint32_t best_id = 0;
    size_t visited = 0;
    while (!queue.empty() && visited < max_visits) {
      auto [bound, ni] = queue.top();
      queue.pop();
      if (bound >= best_d2) break;
      while (nodes_[ni].count == 0) {
        const Node& cur = nodes_[ni];
        double delta = double(q[cur.axis]) - cur.split;
        uint32_t near = delta < 0.0 ? cur.left : cur.right;
        uint32_t far = delta < 0.0 ? cur.right : cur.left;
        double far_bound = bound + delta * delta;
        if (far_bound < best_d2) queue.push({far_bound, far});
        ni = near;
      }
      const Node& leaf = nodes_[ni];
      scan_range(q, leaf.first, leaf.first + leaf.count, best_d2, best_id);
      visited += leaf.count;
    }
    Hit hit;
    hit.id = best_id;
    hit.dist = float(std::sqrt(best_d2));
    return hit;
  }

  // Brute-force fallback; the oracle mode.
  Hit query_exact(const float* q) const {
    double best_d2 = 1e300;
    uint32_t best_id = 0;
    scan_range(q, 0, uint32_t(n_), best_d2, best_id);
    Hit hit;
    hit.id = best_id;
    hit.dist = float(std::sqrt(best_d2));
    return hit;
  }

  Hit query(const std::vector<float>& q, size_t max_visits = SIZE_MAX) const {
    if (int(q.size()) != dim_) throw std::invalid_argument("KdAnnIndex: query width mismatch");
    return query(q.data(), max_visits);
  }

 private:
  static constexpr uint32_t kLeafSize = 16;

  void scan_range(const float* q, uint32_t begin, uint32_t end, double& best_d2,
                  uint32_t& best_id) const {
    for (uint32_t i = begin; i < end; ++i) {
      uint32_t id = order_[i];
      const float* p = points_.data() + size_t(id) * dim_;
      double d2 = 0.0;
      for (int d = 0; d < dim_; ++d) {
        double diff = double(q[d]) - p[d];
        d2 += diff * diff;
      }
      if (d2 < best_d2 || (d2 == best_d2 && id < best_id)) {
        best_d2 = d2;
        best_id = id;
      }
    }
  }

  struct Node {
    float split = 0.0f;
    int axis = 0;
    uint32_t left = 0, right = 0;  // children when count == 0
    uint32_t first = 0, count = 0;
  };

  uint32_t build(size_t begin, size_t end) {
    uint32_t idx = uint32_t(nodes_.size());
    nodes_.emplace_back();
    size_t count = end - begin;
    if (count <= kLeafSize) {
      nodes_[idx].first = uint32_t(begin);
      nodes_[idx].count = uint32_t(count);
      return idx;
    }
    // Widest-spread axis over this subset.
    int axis = 0;
    double best_spread = -1.0;
    for (int d = 0; d < dim_; ++d) {
      float lo = 1e30f, hi = -1e30f;
      for (size_t i = begin; i < end; ++i) {
        float v = points_[size_t(order_[i]) * dim_ + d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (double(hi) - lo > best_spread) {
        best_spread = double(hi) - lo;
        axis = d;
      }
    }
    size_t mid = begin + count / 2;
    std::nth_element(order_.begin() + std::ptrdiff_t(begin), order_.begin() + std::ptrdiff_t(mid),
                     order_.begin() + std::ptrdiff_t(end), [&](uint32_t a, uint32_t b) {
                       float va = points_[size_t(a) * dim_ + axis];
                       float vb = points_[size_t(b) * dim_ + axis];
                       if (va != vb) return va < vb;
                       return a < b;
                     });
    float split = points_[size_t(order_[mid]) * dim_ + axis];
    uint32_t left = build(begin, mid);
    uint32_t right = build(mid, end);
    nodes_[idx].axis = axis;
    nodes_[idx].split = split;
    nodes_[idx].left = left;
    nodes_[idx].right = right;
    return idx;
  }

  std::vector<float> points_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
  int dim_ = 0;
  size_t n_ = 0;
};

}  // namespace vcomp
