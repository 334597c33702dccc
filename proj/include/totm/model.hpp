#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "totm/nn.hpp"
#include "totm/rng.hpp"
#include "totm/tensor.hpp"
#include "totm/toeplitz.hpp"

namespace totm {

enum class Variant {
  full,        // local branch + gated Toeplitz branch
  local_only,  // local branch only; no LN_T, kernel or gate parameters
  no_gate,     // Toeplitz branch added unscaled; no gate parameters
};

const char* to_string(Variant v) noexcept;
Variant parse_variant(const std::string& name);

struct ModelConfig {
  std::size_t d = 32;
  std::size_t blocks = 3;
  std::size_t kernel_size = 5;
  double mlp_ratio = 3.0;
  double dropout_p = 0.1;
  std::size_t T = 180;
  std::size_t pool_grid = 6;  // stem mean-pools each channel over pool_grid^2 cells
  Variant variant = Variant::full;
  std::optional<std::size_t> max_lag;

  static constexpr std::size_t kChannels = 3;

  /// MLP hidden width round(mlp_ratio * d).
  std::size_t hidden() const;
  /// Throws ConfigError on any invalid field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Hierarchical parameter name -> tensor. Ordered, so iteration is
/// deterministic. Gradients use the same layout.
using ParamMap = std::map<std::string, Tensor>;

std::string block_path(std::size_t block, const std::string& leaf);

/// Every parameter path with its shape, for a given configuration.
std::map<std::string, Shape> param_shapes(const ModelConfig& cfg);

/// Fan-in uniform weights, zero biases, unit norm gains, Toeplitz kernels at
/// identity plus N(0, 0.02) off the main diagonal.
ParamMap init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Re-applies the Toeplitz lag cap to every kernel (the r[0] = c[0] tie is
/// structural in the lag layout). Called after each optimizer step.
void enforce_structure(ParamMap& params, const ModelConfig& cfg);

/// Zero tensors with the layout of `params`.
ParamMap zeros_like(const ParamMap& params);

/// Throws CheckpointMismatch naming the first missing, unexpected or
/// misshapen path.
void validate_params(const ParamMap& params, const ModelConfig& cfg);

struct ParamCount {
  std::size_t stem = 0;
  std::size_t per_block = 0;
  std::size_t toeplitz_per_block = 0;
  std::size_t head = 0;
  std::size_t total = 0;
};

/// Closed-form count from the configuration alone.
ParamCount param_count(const ModelConfig& cfg);

/// Element count of an actual parameter map.
std::size_t count_elements(const ParamMap& params);

struct StemCache {
  Tensor pooled;  // B x T x 3P^2
  Tensor pre;     // before SiLU
};

struct BlockCache {
  nn::LayerNormCache ln_in;
  Tensor normed;  // LN_d(H)
  Tensor conv_out;
  Tensor conv_act;
  nn::LayerNormCache ln_time;
  Tensor mix_in;  // LN_T(normed)
  Tensor mixed;   // V
  Tensor gate_pre;
  Tensor gate;
  nn::LayerNormCache ln_mid;
  Tensor mid_normed;
  Tensor hidden_pre;
  Tensor hidden_act;
  nn::DropoutMask drop;
  Tensor hidden_out;  // after dropout
};

struct HeadCache {
  nn::LayerNormCache ln;
  Tensor normed;
};

struct ModelCache {
  StemCache stem;
  std::vector<BlockCache> blocks;
  HeadCache head;
};

/// X: B x T x 3 x H x W  ->  Z: B x T x d.
Tensor stem_forward(const Tensor& x, const ParamMap& params, const ModelConfig& cfg,
                    StemCache* cache = nullptr);
void stem_backward(const Tensor& dz, const StemCache& cache, const ParamMap& params,
                   ParamMap& grads);

ToeplitzKernel block_kernel(const ParamMap& params, const ModelConfig& cfg, std::size_t block);

/// One gated local-global mixer block. rng is only consulted for dropout in
/// training mode.
Tensor mixer_block_forward(const Tensor& h, const ParamMap& params, const ModelConfig& cfg,
                           std::size_t block, bool training, Rng* rng,
                           BlockCache* cache = nullptr);
/// Accumulates parameter gradients into `grads` and returns dH.
Tensor mixer_block_backward(const Tensor& dout, const BlockCache& cache, const ParamMap& params,
                            const ModelConfig& cfg, std::size_t block, ParamMap& grads);

/// Full network, returns the per-frame waveform B x T.
Tensor model_forward(const Tensor& x, const ParamMap& params, const ModelConfig& cfg,
                     bool training, Rng* rng, ModelCache* cache = nullptr);
ParamMap model_backward(const Tensor& dpred, const ModelCache& cache, const ParamMap& params,
                        const ModelConfig& cfg);

}  // namespace totm
