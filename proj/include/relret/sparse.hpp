#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <tuple>
#include <vector>

#include "relret/dense.hpp"
#include "relret/error.hpp"

namespace relret {

/// Compressed-row sparse float64 matrix. Column indices are sorted within
/// each row and explicit zeros are dropped at construction.
class SparseMatrix {
 public:
  using Triplet = std::tuple<std::size_t, std::size_t, double>;

  SparseMatrix() = default;

  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets) {
    for (const auto& [i, j, v] : triplets) {
      (void)v;
      if (i >= rows || j >= cols)
        throw ValidationError("SparseMatrix: triplet index out of range");
    }
    std::sort(triplets.begin(), triplets.end(),
              [](const auto& a, const auto& b) {
                return std::tie(std::get<0>(a), std::get<1>(a)) <
                       std::tie(std::get<0>(b), std::get<1>(b));
              });
    SparseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.row_ptr_.assign(rows + 1, 0);
    for (std::size_t t = 0; t < triplets.size();) {
      const auto [i, j, v0] = triplets[t];
      double v = v0;
      // Duplicates are summed.
      for (++t; t < triplets.size() && std::get<0>(triplets[t]) == i &&
                std::get<1>(triplets[t]) == j;
           ++t)
        v += std::get<2>(triplets[t]);
      if (v != 0.0) {
        m.col_idx_.push_back(j);
        m.values_.push_back(v);
        ++m.row_ptr_[i + 1];
      }
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
    return m;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
    return from_triplets(n, n, std::move(t));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  DenseMatrix to_dense() const {
    DenseMatrix d(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p)
        d(r, col_idx_[p]) = values_[p];
    return d;
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// Sparse-dense product A * X.
inline DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& x) {
  if (a.cols() != x.rows())
    throw ValidationError("spmm: inner dimensions do not match");
  DenseMatrix y(a.rows(), x.cols());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p) {
      const double v = a.values()[p];
      const std::size_t k = a.col_idx()[p];
      for (std::size_t c = 0; c < n; ++c) y(r, c) += v * x(k, c);
    }
  }
  return y;
}

/// A^T * X without materializing the transpose (scatter over rows of A).
inline DenseMatrix spmm_transposed(const SparseMatrix& a, const DenseMatrix& x) {
  if (a.rows() != x.rows())
    throw ValidationError("spmm_transposed: inner dimensions do not match");
  DenseMatrix y(a.cols(), x.cols());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p) {
      const double v = a.values()[p];
      const std::size_t k = a.col_idx()[p];
      for (std::size_t c = 0; c < n; ++c) y(k, c) += v * x(r, c);
    }
  }
  return y;
}

}  // namespace relret
