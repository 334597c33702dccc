#pragma once

#include <cstddef>

#include "totm/tensor.hpp"

namespace totm {

struct StftConfig {
  std::size_t window_len = 128;  // Hann window, power of two
  std::size_t hop = 32;
  double band_lo_hz = 0.75;
  double band_hi_hz = 2.5;
  double p = 1.0;  // 1 or 2

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

struct LossConfig {
  double lambda_mse = 1.0;
  double lambda_rho = 1.0;
  double lambda_spec = 0.5;
  double eps = 1e-8;
  StftConfig stft;

  void validate(double fs) const;

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Loss value with its gradient with respect to `pred` (B x T).
struct LossValue {
  double value = 0.0;
  Tensor grad;
};

struct CombinedLoss {
  double total = 0.0;
  double mse = 0.0;
  double rho = 0.0;
  double spec = 0.0;
  Tensor grad;
};

LossValue mse_loss(const Tensor& pred, const Tensor& ref);

/// Mean over clips of 1 - Pearson correlation, eps inside the square root.
LossValue pearson_loss(const Tensor& pred, const Tensor& ref, double eps);

/// Mean |(|STFT pred| - |STFT ref|)|^p over in-band (clip, bin, frame) cells.
LossValue spectral_loss(const Tensor& pred, const Tensor& ref, const LossConfig& cfg, double fs);

/// Weighted sum of the three terms. Terms with zero weight are skipped.
CombinedLoss combined_loss(const Tensor& pred, const Tensor& ref, const LossConfig& cfg, double fs);

}  // namespace totm
