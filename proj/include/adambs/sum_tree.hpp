#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace adambs {

/// Complete binary segment tree over nonnegative leaf weights.
///
/// Internal nodes hold the exact sum of their two children, recomputed on
/// every point update, so there is no accumulated drift from delta updates.
/// Supports point update and prefix sum in O(log n) and inverse-CDF lookup
/// by a single root-to-leaf descent.
template <typename T = double>
class SumTree {
 public:
  SumTree() = default;

  explicit SumTree(std::span<const T> leaves) { assign(leaves); }

  void assign(std::span<const T> leaves) {
    size_ = leaves.size();
    capacity_ = 1;
    while (capacity_ < size_) capacity_ <<= 1;
    nodes_.assign(2 * capacity_, T{});
    for (std::size_t j = 0; j < size_; ++j) nodes_[capacity_ + j] = leaves[j];
    rebuild();
  }

  // Recompute every internal node from the leaves. O(n).
  void rebuild() {
    for (std::size_t i = capacity_ - 1; i >= 1; --i) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
  }

  std::size_t size() const noexcept { return size_; }

  T total() const noexcept { return size_ == 0 ? T{} : nodes_[1]; }

  T leaf(std::size_t j) const {
    assert(j < size_);
    return nodes_[capacity_ + j];
  }

  void set(std::size_t j, T value) {
    assert(j < size_);
    std::size_t i = capacity_ + j;
    nodes_[i] = value;
    for (i >>= 1; i >= 1; i >>= 1) nodes_[i] = nodes_[2 * i] + nodes_[2 * i + 1];
  }

  // Leaf values are written directly; call rebuild() afterwards.
  void set_leaf_unsynced(std::size_t j, T value) {
    assert(j < size_);
    nodes_[capacity_ + j] = value;
  }

  /// Sum of leaves [0, j).
  T prefix_sum(std::size_t j) const {
    assert(j <= size_);
    if (j == 0) return T{};
    if (j == size_) return total();
    T sum{};
    std::size_t lo = capacity_ + 0;
    std::size_t hi = capacity_ + j;  // half-open [lo, hi)
    while (lo < hi) {
      if (lo & 1) sum += nodes_[lo++];
      if (hi & 1) sum += nodes_[--hi];
      lo >>= 1;
      hi >>= 1;
    }
    return sum;
  }

  /// Index j with prefix_sum(j) <= target < prefix_sum(j + 1), found by
  /// descent. A target equal to a left-subtree sum descends right. Targets
  /// at or past the total (rounding) land on the last positive leaf.
  std::size_t find(T target) const {
    assert(size_ > 0);
    std::size_t i = 1;
    while (i < capacity_) {
      const T left = nodes_[2 * i];
      const T right = nodes_[2 * i + 1];
      if (target < left || !(right > T{})) {
        i = 2 * i;
      } else {
        target -= left;
        i = 2 * i + 1;
      }
    }
    return i - capacity_;
  }

  std::vector<T> leaves() const {
    return std::vector<T>(nodes_.begin() + static_cast<std::ptrdiff_t>(capacity_),
                          nodes_.begin() + static_cast<std::ptrdiff_t>(capacity_ + size_));
  }

 private:
  std::size_t size_ = 0;
  std::size_t capacity_ = 1;
  std::vector<T> nodes_ = std::vector<T>(2);
};

}  // namespace adambs
