#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "esikit/geometry.hpp"

namespace esi {

/// Static kd-tree over a point set. Immutable after construction, so queries
/// may run concurrently.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const LocationSet& points, std::size_t leaf_size = 8)
      : points_(&points), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    index_.resize(points.size());
    std::iota(index_.begin(), index_.end(), std::size_t{0});
    if (!index_.empty()) build(0, index_.size());
  }

  std::size_t size() const noexcept { return index_.size(); }

  /// Index of the closest point; equal distances resolve to the lowest index.
  std::size_t nearest(std::span<const double> x) const {
    detail::require(!index_.empty(), "KdTree::nearest: empty tree");
    Best best;
    nearest_rec(0, x, best);
    return best.index;
  }

  /// Indices of all points with distance <= radius, in increasing order.
  std::vector<std::size_t> radius(std::span<const double> x, double radius) const {
    std::vector<std::size_t> out;
    if (!index_.empty() && radius >= 0.0) radius_rec(0, x, radius * radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Node {
    std::size_t begin, end;
    std::size_t dim = 0;
    double split = 0.0;
    std::int64_t left = -1, right = -1;
  };
  struct Best {
    double d2 = std::numeric_limits<double>::infinity();
    std::size_t index = std::numeric_limits<std::size_t>::max();
  };

  std::size_t build(std::size_t begin, std::size_t end) {
    std::size_t id = nodes_.size();
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    std::size_t d = points_->dim();
    std::size_t best_dim = 0;
    double best_spread = -1.0;
    for (std::size_t a = 0; a < d; ++a) {
      double lo = HUGE_VAL, hi = -HUGE_VAL;
      for (std::size_t i = begin; i < end; ++i) {
        double v = points_->row(index_[i])[a];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = a;
      }
    }
    if (best_spread <= 0.0) return id;  // all coincide

    std::size_t mid = begin + (end - begin) / 2;
    auto key = [&](std::size_t i) { return points_->row(i)[best_dim]; };
    std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                     [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
    double split = key(index_[mid]);
    nodes_[id].dim = best_dim;
    nodes_[id].split = split;
    std::int64_t l = static_cast<std::int64_t>(build(begin, mid));
    std::int64_t r = static_cast<std::int64_t>(build(mid, end));
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  // Left subtree holds coordinates <= split, right subtree >= split.
  void nearest_rec(std::size_t id, std::span<const double> x, Best& best) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        std::size_t p = index_[i];
        double d2 = squared_distance(x, points_->row(p));
        if (d2 < best.d2 || (d2 == best.d2 && p < best.index)) {
          best.d2 = d2;
          best.index = p;
        }
      }
      return;
    }
    double diff = x[n.dim] - n.split;
    std::size_t first = diff < 0.0 ? static_cast<std::size_t>(n.left) : static_cast<std::size_t>(n.right);
    std::size_t second = diff < 0.0 ? static_cast<std::size_t>(n.right) : static_cast<std::size_t>(n.left);
    nearest_rec(first, x, best);
    if (diff * diff <= best.d2) nearest_rec(second, x, best);
  }

  void radius_rec(std::size_t id, std::span<const double> x, double r2, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i)
        if (squared_distance(x, points_->row(index_[i])) <= r2) out.push_back(index_[i]);
      return;
    }
    double diff = x[n.dim] - n.split;
    if (diff <= 0.0 || diff * diff <= r2) radius_rec(static_cast<std::size_t>(n.left), x, r2, out);
    if (diff >= 0.0 || diff * diff <= r2) radius_rec(static_cast<std::size_t>(n.right), x, r2, out);
  }

  const LocationSet* points_ = nullptr;
  std::size_t leaf_size_ = 8;
  std::vector<std::size_t> index_;
  std::vector<Node> nodes_;
};

}  // namespace esi
