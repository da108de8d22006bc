#include "alcr/optim.hpp"

#include <cmath>

namespace alcr::autodiff {

AdamState::AdamState(const ParameterStore& params) {
  for (const auto& name : params.names()) {
    m[name] = Tensor::zeros_like(params.at(name));
    v[name] = Tensor::zeros_like(params.at(name));
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double norm = grads.global_l2_norm();
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (auto& [name, g] : grads.by_name)
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
  }
  return norm;
}

void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state,
               const AdamConfig& cfg) {
  ++state.step;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    Tensor& pm = state.m.at(name);
    Tensor& pv = state.v.at(name);
    auto it = grads.by_name.find(name);
    const Tensor* g = it != grads.by_name.end() ? &it->second : nullptr;
    for (std::int64_t i = 0; i < p.size(); ++i) {
      double gi = g != nullptr ? (*g)[i] : 0.0;
      pm[i] = cfg.beta1 * pm[i] + (1.0 - cfg.beta1) * gi;
      pv[i] = cfg.beta2 * pv[i] + (1.0 - cfg.beta2) * gi * gi;
      double m_hat = pm[i] / bc1;
      double v_hat = pv[i] / bc2;
      p[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    p.check_finite("adam_step");
  }
}

double lr_at_epoch(double base_lr, double divisor, int epoch) {
  return base_lr / std::pow(divisor, static_cast<double>(epoch));
}

}  // namespace alcr::autodiff
