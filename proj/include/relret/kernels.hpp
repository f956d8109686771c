#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "relret/dense.hpp"
#include "relret/error.hpp"
#include "relret/rng.hpp"
#include "relret/sparse.hpp"

// Forward kernels and their hand-derived backward counterparts. Every
// backward variant *accumulates* into the gradient argument so a tape can
// replay them in reverse order and sum contributions from shared inputs.

namespace relret {

inline DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows())
    throw ValidationError("matmul: inner dimensions do not match");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(i, k);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += av * b(k, j);
    }
  return c;
}

// dA = dC * B^T, dB = A^T * dC
inline void matmul_backward(const DenseMatrix& grad_c, const DenseMatrix& a,
                            const DenseMatrix& b, DenseMatrix& grad_a,
                            DenseMatrix& grad_b) {
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      const double g = grad_c(i, j);
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        grad_a(i, k) += g * b(k, j);
        grad_b(k, j) += g * a(i, k);
      }
    }
}

// dX = A^T * dY; the sparse operand is a constant.
inline void spmm_backward(const SparseMatrix& a, const DenseMatrix& grad_y,
                          DenseMatrix& grad_x) {
  const DenseMatrix gx = spmm_transposed(a, grad_y);
  for (std::size_t i = 0; i < gx.size(); ++i) grad_x[i] += gx[i];
}

inline DenseMatrix relu(const DenseMatrix& x) {
  DenseMatrix y = x;
  for (double& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

// Subgradient 0 at x == 0.
inline void relu_backward(const DenseMatrix& grad_y, const DenseMatrix& x,
                          DenseMatrix& grad_x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0.0) grad_x[i] += grad_y[i];
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline DenseMatrix sigmoid(const DenseMatrix& x) {
  DenseMatrix y = x;
  for (double& v : y.data()) v = sigmoid(v);
  return y;
}

// Uses the saved output: dx = dy * y * (1 - y).
inline void sigmoid_backward(const DenseMatrix& grad_y, const DenseMatrix& y,
                             DenseMatrix& grad_x) {
  for (std::size_t i = 0; i < y.size(); ++i)
    grad_x[i] += grad_y[i] * y[i] * (1.0 - y[i]);
}

inline DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ValidationError("hadamard: shape mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

inline void hadamard_backward(const DenseMatrix& grad_c, const DenseMatrix& a,
                              const DenseMatrix& b, DenseMatrix& grad_a,
                              DenseMatrix& grad_b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    grad_a[i] += grad_c[i] * b[i];
    grad_b[i] += grad_c[i] * a[i];
  }
}

inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) throw ValidationError("add: shape mismatch");
  DenseMatrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

inline void add_backward(const DenseMatrix& grad_c, DenseMatrix& grad_a,
                         DenseMatrix& grad_b) {
  for (std::size_t i = 0; i < grad_c.size(); ++i) {
    grad_a[i] += grad_c[i];
    grad_b[i] += grad_c[i];
  }
}

/// Inverted dropout. At train time keeps each entry with probability 1-p and
/// scales by 1/(1-p); at eval time it is the identity. The mask is returned
/// so the backward pass replays the same pattern.
inline DenseMatrix dropout(const DenseMatrix& x, double p, bool train, Rng& rng,
                           std::vector<std::uint8_t>& mask_out) {
  if (!(p >= 0.0 && p < 1.0))
    throw ValidationError("dropout: p must be in [0, 1)");
  if (!train || p == 0.0) {
    mask_out.assign(x.size(), 1);
    return x;
  }
  const double scale = 1.0 / (1.0 - p);
  mask_out.resize(x.size());
  DenseMatrix y = x;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool keep = !rng.bernoulli(p);
    mask_out[i] = keep ? 1 : 0;
    y[i] = keep ? y[i] * scale : 0.0;
  }
  return y;
}

inline void dropout_backward(const DenseMatrix& grad_y,
                             const std::vector<std::uint8_t>& mask, double p,
                             bool train, DenseMatrix& grad_x) {
  if (!train || p == 0.0) {
    for (std::size_t i = 0; i < grad_y.size(); ++i) grad_x[i] += grad_y[i];
    return;
  }
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < grad_y.size(); ++i)
    if (mask[i]) grad_x[i] += grad_y[i] * scale;
}

inline DenseMatrix mean_rows(const DenseMatrix& x) {
  DenseMatrix y(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) y(0, c) += x(r, c);
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (double& v : y.data()) v *= inv;
  return y;
}

inline void mean_rows_backward(const DenseMatrix& grad_y, std::size_t rows,
                               DenseMatrix& grad_x) {
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < grad_y.cols(); ++c)
      grad_x(r, c) += grad_y(0, c) * inv;
}

inline DenseMatrix sum_rows(const DenseMatrix& x) {
  DenseMatrix y(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) y(0, c) += x(r, c);
  return y;
}

inline void sum_rows_backward(const DenseMatrix& grad_y, std::size_t rows,
                              DenseMatrix& grad_x) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < grad_y.cols(); ++c)
      grad_x(r, c) += grad_y(0, c);
}

/// Row-major reshape to a single row.
inline DenseMatrix flatten(const DenseMatrix& x) {
  return DenseMatrix(1, x.size(), x.data());
}

inline void flatten_backward(const DenseMatrix& grad_y, DenseMatrix& grad_x) {
  for (std::size_t i = 0; i < grad_y.size(); ++i) grad_x[i] += grad_y[i];
}

}  // namespace relret
