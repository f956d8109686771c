#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "relret/dense.hpp"
#include "relret/error.hpp"

namespace relret {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.005;
};

/// First and second moment estimates for one parameter tensor.
struct AdamState {
  DenseMatrix m;
  DenseMatrix v;

  static AdamState zeros_like(const DenseMatrix& p) {
    return {DenseMatrix(p.rows(), p.cols()), DenseMatrix(p.rows(), p.cols())};
  }
};

/// One bias-corrected Adam update. `step` is the 1-based update count for
/// this tensor. L2 regularization enters as weight_decay * param added to
/// the gradient before the moment updates; pass weight_decay = 0 for
/// tensors (biases) that are not regularized.
inline void adam_step(DenseMatrix& param, const DenseMatrix& grad,
                      AdamState& state, std::int64_t step,
                      const AdamConfig& cfg, double weight_decay,
                      const std::string& name) {
  if (!param.same_shape(grad) || !param.same_shape(state.m) ||
      !param.same_shape(state.v))
    throw ValidationError("adam_step: shape mismatch for " + name);
  if (!grad.all_finite())
    throw TrainingError("non-finite gradient for parameter " + name);

  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + weight_decay * param[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

}  // namespace relret
