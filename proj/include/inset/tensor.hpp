#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace inset {

/// Dense row-major matrix of doubles. Vectors are 1 x c (row) or n x 1 (column).
class Tensor {
 public:
  Tensor() = default;

  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      std::ostringstream msg;
      msg << "tensor data length " << data_.size() << " does not match shape " << rows_ << "x"
          << cols_;
      throw std::invalid_argument(msg.str());
    }
  }

  static Tensor row(std::initializer_list<double> values) {
    return Tensor(1, values.size(), std::vector<double>(values));
  }
  static Tensor column(std::initializer_list<double> values) {
    return Tensor(values.size(), 1, std::vector<double>(values));
  }
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  /// Value of a 1x1 tensor.
  double item() const {
    if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str());
    return data_[0];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row_span(std::size_t r) {
    return std::span<double>(data_).subspan(r * cols_, cols_);
  }

  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  std::string shape_str() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Rows gathered in the given order: result row k is source row order[k].
  Tensor gather_rows(std::span<const std::size_t> order) const {
    Tensor out(order.size(), cols_);
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (order[k] >= rows_) throw std::out_of_range("gather_rows: index out of range");
      std::copy_n(data_.begin() + std::ptrdiff_t(order[k] * cols_), cols_,
                  out.data_.begin() + std::ptrdiff_t(k * cols_));
    }
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Order-independent sum: values are sorted ascending before accumulation, so
/// any permutation of the same multiset gives a bitwise-identical result.
/// `scratch` is reordered in place.
inline double canonical_sum(std::span<double> scratch) {
  std::sort(scratch.begin(), scratch.end());
  double acc = 0.0;
  for (double v : scratch) acc += v;
  return acc;
}

inline double canonical_sum_copy(std::span<const double> values) {
  std::vector<double> tmp(values.begin(), values.end());
  return canonical_sum(tmp);
}

// Matrix kernels. Every output row depends only on the matching input row and
// accumulates over the inner dimension in index order, so results do not
// depend on where a row sits in the matrix.

/// c += a * b
inline void gemm_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = &c(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = &b(p, 0);
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

/// c += a * b^T
inline void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), m = a.cols(), k = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = &b(p, 0);
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += arow[j] * brow[j];
      c(i, p) += acc;
    }
  }
}

/// c += a^T * b
inline void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* brow = &b(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      double* crow = &c(p, 0);
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " and " +
                                b.shape_str());
  Tensor c(a.rows(), b.cols());
  gemm_acc(a, b, c);
  return c;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace inset
