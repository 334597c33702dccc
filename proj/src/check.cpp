#include "totm/check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "totm/fft.hpp"
#include "totm/losses.hpp"
#include "totm/nn.hpp"
#include "totm/oracle.hpp"
#include "totm/toeplitz.hpp"

namespace totm::check {

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(shape);
  for (auto& v : t.storage()) v = normal(rng);
  return t;
}

GradReport compare(std::string name, std::span<double> values, std::span<const double> analytic,
                   const std::function<double()>& objective) {
  const auto numeric = oracle::numeric_gradient(values, objective);
  return {std::move(name), oracle::relative_error(analytic, numeric, oracle::kGradientNormFloor)};
}

std::string fmt(const char* pattern, double v) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

void randomize(ParamMap& params, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& [path, t] : params)
    for (auto& v : t.storage()) v += normal(rng);
}

}  // namespace

double worst(const std::vector<GradReport>& reports) {
  double w = 0.0;
  for (const auto& r : reports) w = std::max(w, r.rel_error);
  return w;
}

double toeplitz_dense_gap(std::size_t T, std::size_t B, std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> c(T), r(T);
  for (std::size_t k = 0; k < T; ++k) {
    c[k] = normal(rng);
    r[k] = normal(rng);
  }
  const ToeplitzKernel kernel(c, r);
  const Tensor q = random_tensor({B, T, d}, rng);
  return max_abs_diff(toeplitz_mix(q, kernel), oracle::dense_matvec(build_dense(kernel), q));
}

FftCaseErrors fft_case(std::size_t n, std::size_t conv_m, std::size_t conv_n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexArray x(n);
  for (auto& v : x) v = Complex(normal(rng), normal(rng));
  FftCaseErrors e;
  const ComplexArray spectrum = fft_forward(x);
  const ComplexArray back = fft_inverse(spectrum);
  double time_energy = 0.0, freq_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e.roundtrip = std::max(e.roundtrip, std::abs(back[i] - x[i]));
    time_energy += std::norm(x[i]);
    freq_energy += std::norm(spectrum[i]);
  }
  e.parseval = std::abs(time_energy - freq_energy / static_cast<double>(n)) / time_energy;
  if (n <= 256) {
    const auto naive = oracle::naive_dft(x);
    for (std::size_t i = 0; i < n; ++i) {
      e.dft_vs_naive = std::max(e.dft_vs_naive, std::abs(naive[i] - spectrum[i]));
    }
  }
  std::vector<double> a(conv_m), b(conv_n);
  for (auto& v : a) v = normal(rng);
  for (auto& v : b) v = normal(rng);
  const auto fast = linear_convolve(a, b);
  const auto slow = oracle::naive_convolve(a, b);
  for (std::size_t i = 0; i < fast.size(); ++i) {
    e.convolution = std::max(e.convolution, std::abs(fast[i] - slow[i]));
  }
  return e;
}

std::vector<GradReport> layer_gradients(Rng& rng) {
  std::vector<GradReport> out;
  const std::size_t B = 2, T = 9, d = 4;

  {  // layer_norm_d
    Tensor h = random_tensor({B, 5, 8}, rng);
    Tensor gamma = random_tensor({8}, rng), beta = random_tensor({8}, rng);
    const Tensor up = random_tensor(h.shape(), rng);
    nn::LayerNormCache cache;
    nn::layer_norm_d(h, gamma, beta, nn::kLayerNormEps, &cache);
    const auto g = nn::layer_norm_d_backward(up, gamma, cache);
    const auto f = [&] { return dot(nn::layer_norm_d(h, gamma, beta), up); };
    out.push_back(compare("layer_norm_d.input", h.values(), g.dx.values(), f));
    out.push_back(compare("layer_norm_d.gamma", gamma.values(), g.dgamma.values(), f));
    out.push_back(compare("layer_norm_d.beta", beta.values(), g.dbeta.values(), f));
  }
  {  // layer_norm_t
    Tensor h = random_tensor({B, T, d}, rng);
    Tensor gamma = random_tensor({T}, rng), beta = random_tensor({T}, rng);
    const Tensor up = random_tensor(h.shape(), rng);
    nn::LayerNormCache cache;
    nn::layer_norm_t(h, gamma, beta, nn::kLayerNormEps, &cache);
    const auto g = nn::layer_norm_t_backward(up, gamma, cache);
    const auto f = [&] { return dot(nn::layer_norm_t(h, gamma, beta), up); };
    out.push_back(compare("layer_norm_t.input", h.values(), g.dx.values(), f));
    out.push_back(compare("layer_norm_t.gamma", gamma.values(), g.dgamma.values(), f));
    out.push_back(compare("layer_norm_t.beta", beta.values(), g.dbeta.values(), f));
  }
  {  // dwconv1d
    Tensor h = random_tensor({B, T, d}, rng);
    Tensor w = random_tensor({5, d}, rng), bias = random_tensor({d}, rng);
    const Tensor up = random_tensor(h.shape(), rng);
    const auto g = nn::dwconv1d_backward(up, h, w);
    const auto f = [&] { return dot(nn::dwconv1d(h, w, bias), up); };
    out.push_back(compare("dwconv1d.input", h.values(), g.dx.values(), f));
    out.push_back(compare("dwconv1d.weight", w.values(), g.dweight.values(), f));
    out.push_back(compare("dwconv1d.bias", bias.values(), g.dbias.values(), f));
  }
  {  // pointwise_linear
    Tensor h = random_tensor({B, 3, 5}, rng);
    Tensor w = random_tensor({7, 5}, rng), bias = random_tensor({7}, rng);
    const Tensor up = random_tensor({B, 3, 7}, rng);
    const auto g = nn::pointwise_linear_backward(up, h, w, true);
    const auto f = [&] { return dot(nn::pointwise_linear(h, w, &bias), up); };
    out.push_back(compare("pointwise_linear.input", h.values(), g.dx.values(), f));
    out.push_back(compare("pointwise_linear.weight", w.values(), g.dweight.values(), f));
    out.push_back(compare("pointwise_linear.bias", bias.values(), g.dbias.values(), f));
  }
  for (const auto kind : {nn::Activation::silu, nn::Activation::sigmoid}) {
    Tensor x = random_tensor({100}, rng, 3.0);
    const Tensor up = random_tensor(x.shape(), rng);
    const auto dx = nn::activation_backward(up, x, kind);
    const auto f = [&] { return dot(nn::activation(x, kind), up); };
    out.push_back(compare(kind == nn::Activation::silu ? "silu" : "sigmoid", x.values(),
                          dx.values(), f));
  }
  return out;
}

std::vector<GradReport> toeplitz_gradients(Rng& rng, bool corrupt) {
  std::vector<GradReport> out;
  const std::size_t B = 2, T = 6, d = 2;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> lags(2 * T - 1);
  for (auto& v : lags) v = normal(rng);
  Tensor q = random_tensor({B, T, d}, rng);
  const Tensor up = random_tensor(q.shape(), rng);
  const auto kernel = ToeplitzKernel::from_lags(lags);
  auto g = toeplitz_mix_backward(up, q, kernel);
  if (corrupt) {
    for (auto& v : g.dq.storage()) v *= 1.01;
  }
  const auto analytic_lags = lag_gradient(g.dc, g.dr);
  const auto f = [&] { return dot(toeplitz_mix(q, ToeplitzKernel::from_lags(lags)), up); };
  out.push_back(compare("toeplitz.input", q.values(), g.dq.values(), f));
  out.push_back(compare("toeplitz.lags", lags, analytic_lags, f));

  // Brute-force kernel gradients and the dense transpose.
  std::vector<double> dc, dr;
  oracle::dense_kernel_grads(up, q, dc, dr);
  std::vector<double> all_fast(g.dc), all_dense(dc);
  all_fast.insert(all_fast.end(), g.dr.begin(), g.dr.end());
  all_dense.insert(all_dense.end(), dr.begin(), dr.end());
  out.push_back({"toeplitz.kernel_vs_dense", oracle::relative_error(all_fast, all_dense)});
  const Tensor dq_dense = oracle::dense_matvec(build_dense(kernel.transposed()), up);
  out.push_back({"toeplitz.adjoint_vs_dense", oracle::relative_error(g.dq.values(), dq_dense.values())});
  return out;
}

std::vector<GradReport> loss_gradients(Rng& rng) {
  std::vector<GradReport> out;
  const std::size_t B = 3, T = 40;
  Tensor pred = random_tensor({B, T}, rng);
  const Tensor ref = random_tensor({B, T}, rng);
  LossConfig cfg;
  cfg.stft.window_len = 16;
  cfg.stft.hop = 4;
  const double fs = 8.0;  // bins at 0.5 Hz spacing, four inside [0.75, 2.5]

  const auto mse = mse_loss(pred, ref);
  out.push_back(compare("mse", pred.values(), mse.grad.values(),
                        [&] { return mse_loss(pred, ref).value; }));
  const auto rho = pearson_loss(pred, ref, cfg.eps);
  out.push_back(compare("pearson", pred.values(), rho.grad.values(),
                        [&] { return pearson_loss(pred, ref, cfg.eps).value; }));
  for (const double p : {1.0, 2.0}) {
    cfg.stft.p = p;
    const auto spec = spectral_loss(pred, ref, cfg, fs);
    out.push_back(compare(p == 1.0 ? "spectral.p1" : "spectral.p2", pred.values(),
                          spec.grad.values(), [&] { return spectral_loss(pred, ref, cfg, fs).value; }));
  }
  cfg.stft.p = 1.0;
  const auto total = combined_loss(pred, ref, cfg, fs);
  out.push_back(compare("combined", pred.values(), total.grad.values(),
                        [&] { return combined_loss(pred, ref, cfg, fs).total; }));
  return out;
}

std::vector<GradReport> model_gradients(const ModelConfig& cfg, std::size_t frame_size, Rng& rng) {
  ModelConfig c = cfg;
  c.dropout_p = 0.0;
  ParamMap params = init_params(c, rng());
  randomize(params, rng);
  enforce_structure(params, c);
  const Tensor x = random_tensor({2, c.T, 3, frame_size, frame_size}, rng);
  const Tensor up = random_tensor({2, c.T}, rng);

  ModelCache cache;
  model_forward(x, params, c, false, nullptr, &cache);
  const ParamMap grads = model_backward(up, cache, params, c);
  std::vector<GradReport> out;
  for (auto& [path, t] : params) {
    const auto f = [&] { return dot(model_forward(x, params, c, false, nullptr), up); };
    out.push_back(compare(path, t.values(), grads.at(path).values(), f));
  }
  return out;
}

std::vector<GradReport> block_gradients(const ModelConfig& cfg, std::size_t batch, Rng& rng) {
  ModelConfig c = cfg;
  c.dropout_p = 0.0;
  ParamMap params = init_params(c, rng());
  randomize(params, rng);
  enforce_structure(params, c);
  Tensor h = random_tensor({batch, c.T, c.d}, rng);
  const Tensor up = random_tensor(h.shape(), rng);
  BlockCache cache;
  mixer_block_forward(h, params, c, 0, false, nullptr, &cache);
  ParamMap grads;
  const Tensor dh = mixer_block_backward(up, cache, params, c, 0, grads);
  const auto f = [&] { return dot(mixer_block_forward(h, params, c, 0, false, nullptr), up); };
  std::vector<GradReport> out;
  out.push_back(compare("block.input", h.values(), dh.values(), f));
  for (auto& [path, t] : params) {
    if (path.rfind("block.0.", 0) != 0) continue;
    out.push_back(compare(path, t.values(), grads.at(path).values(), f));
  }
  return out;
}

CountCase param_count_case(Rng& rng) {
  std::uniform_int_distribution<std::size_t> small(1, 12);
  std::uniform_int_distribution<std::size_t> length(1, 200);
  std::uniform_int_distribution<int> variant(0, 2);
  std::uniform_real_distribution<double> ratio(0.5, 4.0);
  CountCase cc;
  auto& c = cc.cfg;
  c.d = small(rng);
  c.blocks = std::min<std::size_t>(small(rng), 4);
  c.kernel_size = 2 * std::min<std::size_t>(small(rng), 4) - 1;
  c.mlp_ratio = ratio(rng);
  if (c.hidden() < 1) c.mlp_ratio = 1.0;
  c.T = length(rng);
  c.pool_grid = std::min<std::size_t>(small(rng), 6);
  c.variant = static_cast<Variant>(variant(rng));
  cc.formula = param_count(c).total;
  cc.enumerated = count_elements(init_params(c, rng()));
  return cc;
}

std::vector<SuiteResult> run_checks(const CheckOptions& opts) {
  Rng rng(opts.seed);
  std::vector<SuiteResult> results;

  {
    double rt = 0, pv = 0, conv = 0, naive = 0;
    std::uniform_int_distribution<int> log2n(1, 12);
    std::uniform_int_distribution<std::size_t> conv_len(1, 64);
    for (int i = 0; i < 60; ++i) {
      const auto e = fft_case(std::size_t{1} << log2n(rng), conv_len(rng), conv_len(rng), rng);
      rt = std::max(rt, e.roundtrip);
      pv = std::max(pv, e.parseval);
      conv = std::max(conv, e.convolution);
      naive = std::max(naive, e.dft_vs_naive);
    }
    results.push_back({"fft", rt < 1e-12 && pv < 1e-10 && conv < 1e-10 && naive < 1e-10,
                       fmt("roundtrip %.2e", rt) + fmt(", parseval %.2e", pv) +
                           fmt(", conv %.2e", conv) + fmt(", naive dft %.2e", naive)});
  }
  {
    double gap = 0;
    for (const std::size_t T : {1, 2, 3, 5, 8, 16, 37, 180}) {
      for (int i = 0; i < 3; ++i) gap = std::max(gap, toeplitz_dense_gap(T, 2, 3, rng));
    }
    results.push_back({"toeplitz_dense", gap < 1e-10, fmt("max-abs %.2e", gap)});
  }
  {
    const auto reports = toeplitz_gradients(rng, opts.corrupt_toeplitz_adjoint);
    std::string worst_name;
    double w = 0;
    for (const auto& r : reports) {
      if (r.rel_error >= w) {
        w = r.rel_error;
        worst_name = r.name;
      }
    }
    results.push_back({"gradients.toeplitz", w < 1e-6, fmt("worst rel %.2e", w) + " (" + worst_name + ")"});
  }
  {
    const double w = worst(layer_gradients(rng));
    results.push_back({"gradients.layers", w < 1e-6, fmt("worst rel %.2e", w)});
  }
  {
    ModelConfig c;
    c.d = 8;
    c.blocks = 1;
    c.T = 12;
    const double w = worst(block_gradients(c, 2, rng));
    results.push_back({"gradients.block", w < 1e-6, fmt("worst rel %.2e", w)});
  }
  {
    ModelConfig c;
    c.d = 4;
    c.blocks = 2;
    c.T = 8;
    c.pool_grid = 3;
    const double w = worst(model_gradients(c, 6, rng));
    results.push_back({"gradients.model", w < 1e-5, fmt("worst rel %.2e", w)});
  }
  {
    const double w = worst(loss_gradients(rng));
    Tensor s = random_tensor({2, 64}, rng);
    LossConfig cfg;
    cfg.stft.window_len = 32;
    cfg.stft.hop = 8;
    Tensor neg = s, shifted = s;
    for (auto& v : neg.storage()) v = -v;
    for (auto& v : shifted.storage()) v = 2.5 * v + 1.0;
    const bool identities = mse_loss(s, s).value == 0.0 &&
                            std::abs(pearson_loss(s, s, cfg.eps).value) < 1e-6 &&
                            std::abs(pearson_loss(neg, s, cfg.eps).value - 2.0) < 1e-6 &&
                            std::abs(pearson_loss(shifted, s, cfg.eps).value) < 1e-6 &&
                            spectral_loss(s, s, cfg, 30.0).value == 0.0;
    results.push_back({"losses", w < 1e-5 && identities,
                       fmt("worst gradient rel %.2e", w) + (identities ? ", identities hold" : ", identity FAILED")});
  }
  {
    bool ok = true;
    for (int i = 0; i < 20; ++i) {
      const auto cc = param_count_case(rng);
      ok = ok && cc.formula == cc.enumerated;
    }
    ModelConfig def;
    const auto count = param_count(def);
    ok = ok && count.toeplitz_per_block == 359;
    results.push_back({"param_count", ok,
                       "default total " + std::to_string(count.total) + ", Toeplitz per block " +
                           std::to_string(count.toeplitz_per_block)});
  }
  return results;
}

}  // namespace totm::check
