#pragma once

#include "inset/tensor.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace inset {

/// Membership bitmap over a ground set of size n.
class SubsetMask {
 public:
  SubsetMask() = default;
  explicit SubsetMask(std::size_t n, bool all = false) : bits_(n, all ? 1 : 0) {}

  static SubsetMask from_indices(std::size_t n, std::span<const std::size_t> idx) {
    SubsetMask m(n);
    for (std::size_t i : idx) {
      if (i >= n) throw std::out_of_range("subset index " + std::to_string(i) + " >= " + std::to_string(n));
      m.bits_[i] = 1;
    }
    return m;
  }
  static SubsetMask from_indices(std::size_t n, std::initializer_list<std::size_t> idx) {
    return from_indices(n, std::span<const std::size_t>(idx.begin(), idx.size()));
  }
  /// Low n bits of `code`; bit i is element i. n <= 64.
  static SubsetMask from_bits(std::size_t n, std::uint64_t code) {
    SubsetMask m(n);
    for (std::size_t i = 0; i < n; ++i) m.bits_[i] = std::uint8_t((code >> i) & 1u);
    return m;
  }

  std::size_t size() const noexcept { return bits_.size(); }
  bool contains(std::size_t i) const { return bits_.at(i) != 0; }
  void set(std::size_t i, bool on = true) { bits_.at(i) = on ? 1 : 0; }
  std::size_t count() const {
    return std::size_t(std::count(bits_.begin(), bits_.end(), std::uint8_t(1)));
  }

  std::vector<std::size_t> indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) out.push_back(i);
    return out;
  }

  /// 0/1 indicator as an n x 1 column.
  Tensor indicator_column() const {
    Tensor t(bits_.size(), 1);
    for (std::size_t i = 0; i < bits_.size(); ++i) t[i] = bits_[i];
    return t;
  }
  /// 0/1 indicator as a 1 x n row (the form masked_row_sum takes).
  Tensor indicator_row() const {
    Tensor t(1, bits_.size());
    for (std::size_t i = 0; i < bits_.size(); ++i) t[i] = bits_[i];
    return t;
  }

  /// Mask relabeled by a permutation: element i moves to position perm[i].
  SubsetMask permuted(std::span<const std::size_t> perm) const {
    SubsetMask out(bits_.size());
    for (std::size_t i = 0; i < bits_.size(); ++i) out.bits_[perm[i]] = bits_[i];
    return out;
  }

  friend bool operator==(const SubsetMask&, const SubsetMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// A ground set V (n x d features) with its optimal subset S*.
struct SetSample {
  Tensor features;
  std::vector<std::size_t> optimal_subset;

  std::size_t n() const noexcept { return features.rows(); }
  std::size_t d() const noexcept { return features.cols(); }

  SubsetMask target_mask() const { return SubsetMask::from_indices(n(), optimal_subset); }

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const {
    if (n() == 0) throw std::invalid_argument("sample has an empty ground set");
    if (optimal_subset.empty() || optimal_subset.size() > n())
      throw std::invalid_argument("optimal subset size " + std::to_string(optimal_subset.size()) +
                                  " outside [1, " + std::to_string(n()) + "]");
    std::vector<std::size_t> sorted = optimal_subset;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("optimal subset has duplicate indices");
    if (sorted.back() >= n())
      throw std::invalid_argument("optimal subset index " + std::to_string(sorted.back()) +
                                  " out of range for n=" + std::to_string(n()));
  }

  /// Element i of this sample becomes element perm[i] of the result.
  SetSample permuted(std::span<const std::size_t> perm) const {
    std::vector<std::size_t> inverse(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
    SetSample out;
    out.features = features.gather_rows(inverse);
    for (std::size_t i : optimal_subset) out.optimal_subset.push_back(perm[i]);
    std::sort(out.optimal_subset.begin(), out.optimal_subset.end());
    return out;
  }
};

/// Element order that depends only on the multiset of rows: lexicographic on
/// feature values, ties broken by `tie_key` when given. Element positions
/// appear in the result in canonical order.
inline std::vector<std::size_t> canonical_order(const Tensor& features,
                                                std::span<const std::uint8_t> tie_key = {}) {
  std::vector<std::size_t> order(features.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ra = features.row_span(a), rb = features.row_span(b);
    for (std::size_t c = 0; c < ra.size(); ++c) {
      if (ra[c] < rb[c]) return true;
      if (rb[c] < ra[c]) return false;
    }
    if (!tie_key.empty()) return tie_key[a] < tie_key[b];
    return false;
  });
  return order;
}

/// Uniformly random permutation of {0..n-1}.
template <class Urbg>
std::vector<std::size_t> random_permutation(std::size_t n, Urbg& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = std::size_t(rng() % i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace inset
