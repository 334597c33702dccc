#include "totm/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "totm/fft.hpp"

namespace totm {

namespace {

void require_pair(const Tensor& pred, const Tensor& ref, const char* what) {
  if (pred.rank() != 2) {
    throw DimensionError(std::string(what) + ": expected B x T, got " +
                         shape_to_string(pred.shape()));
  }
  require_shape(ref, pred.shape(), what);
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                 static_cast<double>(n)));
  }
  return w;
}

}  // namespace

void LossConfig::validate(double fs) const {
  if (lambda_mse < 0 || lambda_rho < 0 || lambda_spec < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!(eps > 0)) throw ConfigError("loss.eps must be positive");
  if (!is_power_of_two(stft.window_len)) {
    throw ConfigError("loss.stft.window_len must be a power of two");
  }
  if (stft.hop < 1) throw ConfigError("loss.stft.hop must be >= 1");
  if (!(stft.band_lo_hz > 0 && stft.band_lo_hz < stft.band_hi_hz && stft.band_hi_hz < fs / 2)) {
    throw ConfigError("loss.stft band must satisfy 0 < lo < hi < fs/2");
  }
  if (stft.p != 1.0 && stft.p != 2.0) throw ConfigError("loss.stft.p must be 1 or 2");
}

LossValue mse_loss(const Tensor& pred, const Tensor& ref) {
  require_pair(pred, ref, "mse_loss");
  const double n = static_cast<double>(pred.size());
  LossValue out{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred[i] - ref[i];
    out.value += diff * diff;
    out.grad[i] = 2.0 * diff / n;
  }
  out.value /= n;
  return out;
}

LossValue pearson_loss(const Tensor& pred, const Tensor& ref, double eps) {
  require_pair(pred, ref, "pearson_loss");
  const std::size_t B = pred.dim(0), T = pred.dim(1);
  if (T < 2) throw DimensionError("pearson_loss: needs T >= 2");
  LossValue out{0.0, Tensor(pred.shape())};
  std::vector<double> x(T), y(T), g(T);
  for (std::size_t b = 0; b < B; ++b) {
    double mx = 0.0, my = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      mx += pred.at(b, t);
      my += ref.at(b, t);
    }
    mx /= static_cast<double>(T);
    my /= static_cast<double>(T);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      x[t] = pred.at(b, t) - mx;
      y[t] = ref.at(b, t) - my;
      sxy += x[t] * y[t];
      sxx += x[t] * x[t];
      syy += y[t] * y[t];
    }
    const double denom = std::sqrt(sxx * syy + eps);
    const double rho = sxy / denom;
    out.value += 1.0 - rho;

    // d rho / d x'_t, then through the mean-centering.
    const double denom3 = denom * denom * denom;
    double gmean = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      g[t] = y[t] / denom - sxy * syy * x[t] / denom3;
      gmean += g[t];
    }
    gmean /= static_cast<double>(T);
    for (std::size_t t = 0; t < T; ++t) {
      out.grad.at(b, t) = -(g[t] - gmean) / static_cast<double>(B);
    }
  }
  out.value /= static_cast<double>(B);
  return out;
}

LossValue spectral_loss(const Tensor& pred, const Tensor& ref, const LossConfig& cfg, double fs) {
  require_pair(pred, ref, "spectral_loss");
  cfg.validate(fs);
  const std::size_t B = pred.dim(0), T = pred.dim(1);
  const std::size_t W = cfg.stft.window_len, hop = cfg.stft.hop;
  if (T < W) {
    throw ConfigError("spectral_loss: clip length " + std::to_string(T) +
                      " shorter than STFT window " + std::to_string(W));
  }
  const std::size_t frames = 1 + (T - W) / hop;
  std::vector<std::size_t> bins;
  for (std::size_t k = 0; k <= W / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(W);
    if (f >= cfg.stft.band_lo_hz && f <= cfg.stft.band_hi_hz) bins.push_back(k);
  }
  if (bins.empty()) throw ConfigError("spectral_loss: no STFT bin falls inside the band");

  const auto window = hann(W);
  const FftPlan plan(W);
  const double cells = static_cast<double>(B * frames * bins.size());
  const double p = cfg.stft.p;

  LossValue out{0.0, Tensor(pred.shape())};
  ComplexArray sp(W), sr(W);
  std::vector<double> coef(bins.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t start = f * hop;
      for (std::size_t n = 0; n < W; ++n) {
        sp[n] = window[n] * pred.at(b, start + n);
        sr[n] = window[n] * ref.at(b, start + n);
      }
      plan.forward(sp);
      plan.forward(sr);
      for (std::size_t i = 0; i < bins.size(); ++i) {
        const std::size_t k = bins[i];
        const double mp = std::abs(sp[k]);
        const double diff = mp - std::abs(sr[k]);
        const double mag = std::abs(diff);
        out.value += p == 1.0 ? mag : mag * mag;
        const double dterm = p == 1.0 ? (diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0) : 2.0 * diff;
        // Magnitude has no gradient at the origin; take the zero subgradient.
        coef[i] = mp > 0.0 ? dterm / (cells * mp) : 0.0;
      }
      for (std::size_t n = 0; n < W; ++n) {
        double acc = 0.0;
        for (std::size_t i = 0; i < bins.size(); ++i) {
          if (coef[i] == 0.0) continue;
          const std::size_t k = bins[i];
          const double theta = 2.0 * std::numbers::pi * static_cast<double>((k * n) % W) /
                               static_cast<double>(W);
          acc += coef[i] * (sp[k].real() * std::cos(theta) - sp[k].imag() * std::sin(theta));
        }
        out.grad.at(b, start + n) += window[n] * acc;
      }
    }
  }
  out.value /= cells;
  return out;
}

CombinedLoss combined_loss(const Tensor& pred, const Tensor& ref, const LossConfig& cfg,
                           double fs) {
  require_pair(pred, ref, "combined_loss");
  CombinedLoss out;
  out.grad = Tensor(pred.shape());
  const auto add = [&](double weight, const LossValue& term) {
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += weight * term.grad[i];
  };
  if (cfg.lambda_mse > 0) {
    auto t = mse_loss(pred, ref);
    out.mse = t.value;
    add(cfg.lambda_mse, t);
  }
  if (cfg.lambda_rho > 0) {
    auto t = pearson_loss(pred, ref, cfg.eps);
    out.rho = t.value;
    add(cfg.lambda_rho, t);
  }
  if (cfg.lambda_spec > 0) {
    auto t = spectral_loss(pred, ref, cfg, fs);
    out.spec = t.value;
    add(cfg.lambda_spec, t);
  }
  out.total = cfg.lambda_mse * out.mse + cfg.lambda_rho * out.rho + cfg.lambda_spec * out.spec;
  return out;
}

}  // namespace totm
