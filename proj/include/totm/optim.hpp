#pragma once

#include <cstddef>
#include <optional>

#include "totm/model.hpp"

namespace totm {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;           // decoupled
  std::optional<double> grad_clip;     // global L2 norm cap

  void validate() const;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct AdamState {
  ParamMap m;
  ParamMap v;
};

/// Global L2 norm over every gradient tensor.
double global_norm(const ParamMap& grads);

/// One bias-corrected Adam update (step_index counts from 1). Throws
/// ConfigError if grads and params disagree on paths or shapes.
void adam_step(ParamMap& params, const ParamMap& grads, AdamState& state,
               const OptimizerConfig& cfg, std::size_t step_index);

}  // namespace totm
