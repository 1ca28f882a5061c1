#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "rldet/tensor.hpp"

namespace rldet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
  int64_t step = 0;
};

// Bias-corrected adaptive-moment update, in place. Deterministic given
// (param, grad, state).
inline void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamConfig& cfg) {
  if (!param.same_shape(grad))
    throw std::invalid_argument("adam_step: param/grad shape mismatch " + param.shape_str() +
                                " vs " + grad.shape_str());
  if (state.step == 0) {
    state.m = Tensor::zeros_like(param);
    state.v = Tensor::zeros_like(param);
  } else if (!state.m.same_shape(param)) {
    throw std::invalid_argument("adam_step: state shape mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (int64_t i = 0; i < param.count(); ++i) {
    const size_t k = static_cast<size_t>(i);
    const double g = grad[k];
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[k] / bc1;
    const double vhat = state.v[k] / bc2;
    param[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace rldet
