#pragma once

#include "ofu/nn/conv.hpp"

namespace ofu {

/// Adam hyperparameters; defaults follow the training protocol (constant
/// learning rate 1e-4).
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for a list of parameter tensors. Moments are
/// kept in double; parameters stay in their storage type.
template <class T>
struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m;  // per tensor: weights then bias, interleaved
  std::vector<std::vector<double>> v;

  static AdamState zeros_like(const std::vector<ConvParams<T>*>& params) {
    AdamState state;
    for (const ConvParams<T>* p : params) {
      state.m.emplace_back(p->weights.size(), 0.0);
      state.v.emplace_back(p->weights.size(), 0.0);
      state.m.emplace_back(p->bias.size(), 0.0);
      state.v.emplace_back(p->bias.size(), 0.0);
    }
    return state;
  }
};

namespace adam_detail {

template <class T>
void update_tensor(std::vector<T>& theta, const std::vector<T>& grad, std::vector<double>& m,
                   std::vector<double>& v, const AdamConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = static_cast<double>(grad[i]);
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    theta[i] = static_cast<T>(theta[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

}  // namespace adam_detail

/// One bias-corrected Adam update over all tensors.
template <class T>
void adam_step(const std::vector<ConvParams<T>*>& params, const std::vector<ConvGrads<T>>& grads,
               AdamState<T>& state, const AdamConfig& cfg = {}) {
  OFU_REQUIRE(params.size() == grads.size(), "adam_step: params/grads mismatch");
  OFU_REQUIRE(state.m.size() == 2 * params.size(), "adam_step: state shape mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    OFU_REQUIRE(params[p]->weights.size() == grads[p].weights.size() &&
                    params[p]->bias.size() == grads[p].bias.size(),
                "adam_step: gradient shape mismatch");
    adam_detail::update_tensor(params[p]->weights, grads[p].weights, state.m[2 * p],
                               state.v[2 * p], cfg, bc1, bc2);
    adam_detail::update_tensor(params[p]->bias, grads[p].bias, state.m[2 * p + 1],
                               state.v[2 * p + 1], cfg, bc1, bc2);
  }
}

}  // namespace ofu
