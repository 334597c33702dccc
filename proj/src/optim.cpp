#include "totm/optim.hpp"

#include <cmath>
#include <string>

namespace totm {

void OptimizerConfig::validate() const {
  if (!(lr >= 0)) throw ConfigError("train.lr must be non-negative");
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) {
    throw ConfigError("train.betas must lie in (0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("train.adam_eps must be positive");
  if (weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
  if (grad_clip && !(*grad_clip > 0)) throw ConfigError("train.grad_clip must be positive");
}

double global_norm(const ParamMap& grads) {
  double sq = 0.0;
  for (const auto& [path, g] : grads)
    for (double v : g.values()) sq += v * v;
  return std::sqrt(sq);
}

void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               const OptimizerConfig& cfg, std::size_t step_index) {
  if (step_index < 1) throw ConfigError("adam_step: step index starts at 1");
  if (grads.size() != params.size()) {
    throw ConfigError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                      std::to_string(params.size()) + " parameters");
  }
  for (const auto& [path, p] : params) {
    const auto it = grads.find(path);
    if (it == grads.end()) throw ConfigError("adam_step: no gradient for '" + path + "'");
    if (it->second.shape() != p.shape()) {
      throw ConfigError("adam_step: gradient shape mismatch at '" + path + "'");
    }
  }
  if (state.m.empty()) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }

  double clip_scale = 1.0;
  if (cfg.grad_clip) {
    const double norm = global_norm(grads);
    if (norm > *cfg.grad_clip) clip_scale = *cfg.grad_clip / norm;
  }
  const double step = static_cast<double>(step_index);
  const double correction1 = 1.0 - std::pow(cfg.beta1, step);
  const double correction2 = 1.0 - std::pow(cfg.beta2, step);

  for (auto& [path, p] : params) {
    const Tensor& g = grads.at(path);
    Tensor& m = state.m.at(path);
    Tensor& v = state.v.at(path);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] * clip_scale;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p[i]);
    }
  }
}

}  // namespace totm
