#pragma once

#include <vector>

#include "totm/rng.hpp"
#include "totm/tensor.hpp"

// Differentiable building blocks. Each forward has a matching *_backward
// that takes the upstream gradient plus whatever the forward saved; callers
// own those saved intermediates.

namespace totm::nn {

constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Tensor xhat;                  // normalized input, before the affine
  std::vector<double> inv_std;  // one per normalized slice
};

struct LayerNormGrads {
  Tensor dx;
  Tensor dgamma;
  Tensor dbeta;
};

/// Normalizes every slice along the last axis (the feature axis), population
/// variance, then applies gamma/beta of length d.
Tensor layer_norm_d(const Tensor& h, const Tensor& gamma, const Tensor& beta,
                    double eps = kLayerNormEps, LayerNormCache* cache = nullptr);
LayerNormGrads layer_norm_d_backward(const Tensor& dy, const Tensor& gamma,
                                     const LayerNormCache& cache);

/// Normalizes each channel trace H[b,:,j] over time; gamma/beta have length T.
Tensor layer_norm_t(const Tensor& h, const Tensor& gamma, const Tensor& beta,
                    double eps = kLayerNormEps, LayerNormCache* cache = nullptr);
LayerNormGrads layer_norm_t_backward(const Tensor& dy, const Tensor& gamma,
                                     const LayerNormCache& cache);

struct ConvGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;
};

/// Depthwise temporal convolution, odd kernel K, "same" zero padding.
/// weight is K x d, bias d.
Tensor dwconv1d(const Tensor& h, const Tensor& weight, const Tensor& bias);
ConvGrads dwconv1d_backward(const Tensor& dy, const Tensor& h, const Tensor& weight);

struct LinearGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;  // empty when the layer has no bias
};

/// y = W x (+ b) along the last axis; W is d_out x d_in. bias may be null.
Tensor pointwise_linear(const Tensor& h, const Tensor& weight, const Tensor* bias);
LinearGrads pointwise_linear_backward(const Tensor& dy, const Tensor& h, const Tensor& weight,
                                      bool has_bias);

enum class Activation { silu, sigmoid };

double sigmoid(double x) noexcept;

Tensor activation(const Tensor& x, Activation kind);
/// x is the forward input.
Tensor activation_backward(const Tensor& dy, const Tensor& x, Activation kind);

/// Per-element survivor scale (0 or 1/(1-p)); empty means identity.
struct DropoutMask {
  std::vector<double> scale;
};

/// Inverted dropout. Draws from rng only in training mode with p > 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng, DropoutMask* mask = nullptr);
Tensor dropout_backward(const Tensor& dy, const DropoutMask& mask);

}  // namespace totm::nn
