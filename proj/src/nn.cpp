#include "totm/nn.hpp"

#include <cmath>
#include <string>

#include "parallel.hpp"

namespace totm::nn {

namespace {

void require_vector(const Tensor& t, std::size_t n, const char* what) {
  if (t.rank() != 1 || t.dim(0) != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) + ", got " +
                         shape_to_string(t.shape()));
  }
}

void require_rank3(const Tensor& t, const char* what) {
  if (t.rank() != 3) {
    throw DimensionError(std::string(what) + ": expected B x T x d, got " +
                         shape_to_string(t.shape()));
  }
}


}  // namespace

Tensor layer_norm_d(const Tensor& h, const Tensor& gamma, const Tensor& beta, double eps,
                    LayerNormCache* cache) {
  if (h.rank() == 0) throw DimensionError("layer_norm_d: scalar input");
  const std::size_t d = h.shape().back();
  require_vector(gamma, d, "layer_norm_d gamma");
  require_vector(beta, d, "layer_norm_d beta");
  const std::size_t rows = h.size() / d;

  Tensor y(h.shape());
  Tensor xhat(h.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = h.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double n = (x[j] - mean) * is;
      xhat[r * d + j] = n;
      y[r * d + j] = n * gamma[j] + beta[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

LayerNormGrads layer_norm_d_backward(const Tensor& dy, const Tensor& gamma,
                                     const LayerNormCache& cache) {
  require_shape(dy, cache.xhat.shape(), "layer_norm_d_backward");
  const std::size_t d = dy.shape().back();
  const std::size_t rows = dy.size() / d;
  LayerNormGrads g{Tensor(dy.shape()), Tensor({d}), Tensor({d})};
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xh = cache.xhat.data() + r * d;
    const double* up = dy.data() + r * d;
    double sum = 0.0, sum_x = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dxhat[j] = up[j] * gamma[j];
      sum += dxhat[j];
      sum_x += dxhat[j] * xh[j];
      g.dgamma[j] += up[j] * xh[j];
      g.dbeta[j] += up[j];
    }
    const double scale = cache.inv_std[r] / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      g.dx[r * d + j] = scale * (static_cast<double>(d) * dxhat[j] - sum - xh[j] * sum_x);
    }
  }
  return g;
}

Tensor layer_norm_t(const Tensor& h, const Tensor& gamma, const Tensor& beta, double eps,
                    LayerNormCache* cache) {
  require_rank3(h, "layer_norm_t");
  const std::size_t B = h.dim(0), T = h.dim(1), d = h.dim(2);
  require_vector(gamma, T, "layer_norm_t gamma");
  require_vector(beta, T, "layer_norm_t beta");

  Tensor y(h.shape());
  Tensor xhat(h.shape());
  std::vector<double> inv_std(B * d);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      double mean = 0.0;
      for (std::size_t t = 0; t < T; ++t) mean += h.at(b, t, j);
      mean /= static_cast<double>(T);
      double var = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double c = h.at(b, t, j) - mean;
        var += c * c;
      }
      var /= static_cast<double>(T);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[b * d + j] = is;
      for (std::size_t t = 0; t < T; ++t) {
        const double n = (h.at(b, t, j) - mean) * is;
        xhat.at(b, t, j) = n;
        y.at(b, t, j) = n * gamma[t] + beta[t];
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

LayerNormGrads layer_norm_t_backward(const Tensor& dy, const Tensor& gamma,
                                     const LayerNormCache& cache) {
  require_shape(dy, cache.xhat.shape(), "layer_norm_t_backward");
  const std::size_t B = dy.dim(0), T = dy.dim(1), d = dy.dim(2);
  LayerNormGrads g{Tensor(dy.shape()), Tensor({T}), Tensor({T})};
  std::vector<double> dxhat(T);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      double sum = 0.0, sum_x = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double up = dy.at(b, t, j);
        const double xh = cache.xhat.at(b, t, j);
        dxhat[t] = up * gamma[t];
        sum += dxhat[t];
        sum_x += dxhat[t] * xh;
        g.dgamma[t] += up * xh;
        g.dbeta[t] += up;
      }
      const double scale = cache.inv_std[b * d + j] / static_cast<double>(T);
      for (std::size_t t = 0; t < T; ++t) {
        g.dx.at(b, t, j) = scale * (static_cast<double>(T) * dxhat[t] - sum -
                                    cache.xhat.at(b, t, j) * sum_x);
      }
    }
  }
  return g;
}

Tensor dwconv1d(const Tensor& h, const Tensor& weight, const Tensor& bias) {
  require_rank3(h, "dwconv1d");
  const std::size_t B = h.dim(0), T = h.dim(1), d = h.dim(2);
  if (weight.rank() != 2 || weight.dim(1) != d) {
    throw DimensionError("dwconv1d: weight must be K x " + std::to_string(d) + ", got " +
                         shape_to_string(weight.shape()));
  }
  const std::size_t K = weight.dim(0);
  if (K % 2 == 0) throw ConfigError("dwconv1d: kernel size must be odd, got " + std::to_string(K));
  require_vector(bias, d, "dwconv1d bias");
  const auto half = static_cast<std::ptrdiff_t>(K / 2);
  const auto len = static_cast<std::ptrdiff_t>(T);

  Tensor y(h.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::ptrdiff_t t = 0; t < len; ++t) {
      double* out = &y.at(b, static_cast<std::size_t>(t), 0);
      for (std::size_t j = 0; j < d; ++j) out[j] = bias[j];
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= len) continue;
        const double* in = &h.at(b, static_cast<std::size_t>(src), 0);
        const double* w = &weight.at(k, 0);
        for (std::size_t j = 0; j < d; ++j) out[j] += w[j] * in[j];
      }
    }
  }
  return y;
}

ConvGrads dwconv1d_backward(const Tensor& dy, const Tensor& h, const Tensor& weight) {
  require_shape(dy, h.shape(), "dwconv1d_backward");
  const std::size_t B = h.dim(0), T = h.dim(1), d = h.dim(2);
  const std::size_t K = weight.dim(0);
  const auto half = static_cast<std::ptrdiff_t>(K / 2);
  const auto len = static_cast<std::ptrdiff_t>(T);
  ConvGrads g{Tensor(h.shape()), Tensor(weight.shape()), Tensor({d})};
  for (std::size_t b = 0; b < B; ++b) {
    for (std::ptrdiff_t t = 0; t < len; ++t) {
      const double* up = &dy.at(b, static_cast<std::size_t>(t), 0);
      for (std::size_t j = 0; j < d; ++j) g.dbias[j] += up[j];
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= len) continue;
        const double* in = &h.at(b, static_cast<std::size_t>(src), 0);
        double* dx = &g.dx.at(b, static_cast<std::size_t>(src), 0);
        const double* w = &weight.at(k, 0);
        double* dw = &g.dweight.at(k, 0);
        for (std::size_t j = 0; j < d; ++j) {
          dw[j] += up[j] * in[j];
          dx[j] += up[j] * w[j];
        }
      }
    }
  }
  return g;
}

Tensor pointwise_linear(const Tensor& h, const Tensor& weight, const Tensor* bias) {
  if (h.rank() == 0 || weight.rank() != 2 || weight.dim(1) != h.shape().back()) {
    throw DimensionError("pointwise_linear: weight " + shape_to_string(weight.shape()) +
                         " incompatible with input " + shape_to_string(h.shape()));
  }
  const std::size_t d_out = weight.dim(0), d_in = weight.dim(1);
  if (bias) require_vector(*bias, d_out, "pointwise_linear bias");
  const std::size_t rows = h.size() / d_in;
  Shape out_shape = h.shape();
  out_shape.back() = d_out;
  Tensor y(out_shape);
  const double* w = weight.data();
  const double* x = h.data();
  double* out = y.data();
  // Each output row is written by exactly one iteration.
#pragma omp parallel for schedule(static) num_threads(detail::resolve_threads(0))
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
    const double* xr = x + static_cast<std::size_t>(r) * d_in;
    double* yr = out + static_cast<std::size_t>(r) * d_out;
    for (std::size_t o = 0; o < d_out; ++o) {
      double acc = bias ? (*bias)[o] : 0.0;
      const double* wo = w + o * d_in;
      for (std::size_t i = 0; i < d_in; ++i) acc += wo[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

LinearGrads pointwise_linear_backward(const Tensor& dy, const Tensor& h, const Tensor& weight,
                                      bool has_bias) {
  const std::size_t d_out = weight.dim(0), d_in = weight.dim(1);
  const std::size_t rows = h.size() / d_in;
  if (dy.size() != rows * d_out) {
    throw DimensionError("pointwise_linear_backward: upstream " + shape_to_string(dy.shape()));
  }
  LinearGrads g{Tensor(h.shape()), Tensor(weight.shape()), {}};
  if (has_bias) g.dbias = Tensor({d_out});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = h.data() + r * d_in;
    const double* up = dy.data() + r * d_out;
    double* dx = g.dx.data() + r * d_in;
    for (std::size_t o = 0; o < d_out; ++o) {
      const double u = up[o];
      if (u == 0.0) continue;
      const double* wo = weight.data() + o * d_in;
      double* dwo = g.dweight.data() + o * d_in;
      for (std::size_t i = 0; i < d_in; ++i) {
        dx[i] += u * wo[i];
        dwo[i] += u * xr[i];
      }
    }
    if (has_bias) {
      for (std::size_t o = 0; o < d_out; ++o) g.dbias[o] += up[o];
    }
  }
  return g;
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activation(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = sigmoid(x[i]);
    y[i] = kind == Activation::silu ? x[i] * s : s;
  }
  return y;
}

Tensor activation_backward(const Tensor& dy, const Tensor& x, Activation kind) {
  require_shape(dy, x.shape(), "activation_backward");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = sigmoid(x[i]);
    const double deriv = kind == Activation::silu ? s * (1.0 + x[i] * (1.0 - s)) : s * (1.0 - s);
    dx[i] = dy[i] * deriv;
  }
  return dx;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng, DropoutMask* mask) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  }
  if (mask) mask->scale.clear();
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double survivor = 1.0 / (1.0 - p);
  std::vector<double> scale(x.size());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale[i] = keep(rng) ? survivor : 0.0;
    y[i] = x[i] * scale[i];
  }
  if (mask) mask->scale = std::move(scale);
  return y;
}

Tensor dropout_backward(const Tensor& dy, const DropoutMask& mask) {
  if (mask.scale.empty()) return dy;
  if (mask.scale.size() != dy.size()) throw DimensionError("dropout_backward: mask size mismatch");
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask.scale[i];
  return dx;
}

}  // namespace totm::nn
