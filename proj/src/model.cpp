#include "totm/model.hpp"

#include <cmath>
#include <random>
#include <string>

namespace totm {

namespace {

const Tensor& param(const ParamMap& params, const std::string& path) {
  const auto it = params.find(path);
  if (it == params.end()) throw ConfigError("missing parameter '" + path + "'");
  return it->second;
}

void accumulate(ParamMap& grads, const std::string& path, const Tensor& g) {
  auto it = grads.find(path);
  if (it == grads.end()) {
    grads.emplace(path, g);
  } else {
    add_inplace(it->second, g);
  }
}

bool has_toeplitz(Variant v) { return v != Variant::local_only; }
bool has_gate(Variant v) { return v == Variant::full; }

void check_variant_params(const ParamMap& params, const ModelConfig& cfg, std::size_t block) {
  const bool kernel_present = params.count(block_path(block, "toeplitz.lags")) != 0;
  const bool gate_present = params.count(block_path(block, "gate.weight")) != 0;
  if (kernel_present != has_toeplitz(cfg.variant) || gate_present != has_gate(cfg.variant)) {
    throw ConfigError("block " + std::to_string(block) + " parameters do not match variant '" +
                      to_string(cfg.variant) + "'");
  }
}

}  // namespace

const char* to_string(Variant v) noexcept {
  switch (v) {
    case Variant::full: return "full";
    case Variant::local_only: return "local_only";
    case Variant::no_gate: return "no_gate";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "local_only") return Variant::local_only;
  if (name == "no_gate") return Variant::no_gate;
  throw ConfigError("unknown model variant '" + name + "' (expected full, local_only, no_gate)");
}

std::size_t ModelConfig::hidden() const {
  return static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(d)));
}

void ModelConfig::validate() const {
  if (d < 1) throw ConfigError("model.d must be >= 1");
  if (blocks < 1) throw ConfigError("model.blocks must be >= 1");
  if (kernel_size % 2 == 0) throw ConfigError("model.kernel_size must be odd");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("model.dropout_p must be in [0, 1)");
  if (!(mlp_ratio > 0.0) || hidden() < 1) throw ConfigError("model.mlp_ratio gives hidden width < 1");
  if (T < 1) throw ConfigError("model.T must be >= 1");
  if (pool_grid < 1) throw ConfigError("model.pool_grid must be >= 1");
}

std::string block_path(std::size_t block, const std::string& leaf) {
  return "block." + std::to_string(block) + "." + leaf;
}

std::map<std::string, Shape> param_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d, h = cfg.hidden(), T = cfg.T;
  const std::size_t features = ModelConfig::kChannels * cfg.pool_grid * cfg.pool_grid;
  std::map<std::string, Shape> shapes;
  shapes["stem.weight"] = {d, features};
  shapes["stem.bias"] = {d};
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    shapes[block_path(l, "ln_in.gamma")] = {d};
    shapes[block_path(l, "ln_in.beta")] = {d};
    shapes[block_path(l, "dwconv.weight")] = {cfg.kernel_size, d};
    shapes[block_path(l, "dwconv.bias")] = {d};
    shapes[block_path(l, "pw.weight")] = {d, d};
    shapes[block_path(l, "pw.bias")] = {d};
    if (has_toeplitz(cfg.variant)) {
      shapes[block_path(l, "ln_time.gamma")] = {T};
      shapes[block_path(l, "ln_time.beta")] = {T};
      shapes[block_path(l, "toeplitz.lags")] = {2 * T - 1};
    }
    if (has_gate(cfg.variant)) {
      shapes[block_path(l, "gate.weight")] = {d, d};
      shapes[block_path(l, "gate.bias")] = {d};
    }
    shapes[block_path(l, "ln_mid.gamma")] = {d};
    shapes[block_path(l, "ln_mid.beta")] = {d};
    shapes[block_path(l, "mlp.w1")] = {h, d};
    shapes[block_path(l, "mlp.w2")] = {d, h};
  }
  shapes["head.ln.gamma"] = {d};
  shapes["head.ln.beta"] = {d};
  shapes["head.weight"] = {d};
  shapes["head.bias"] = {1};
  return shapes;
}

ParamMap init_params(const ModelConfig& cfg, std::uint64_t seed) {
  const auto shapes = param_shapes(cfg);
  Rng rng(seed);
  ParamMap params;
  // Map order is fixed, so the draw sequence is too.
  for (const auto& [path, shape] : shapes) {
    Tensor t(shape);
    const auto ends_with = [&](const std::string& suffix) {
      return path.size() >= suffix.size() &&
             path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".gamma")) {
      t.fill(1.0);
    } else if (ends_with("toeplitz.lags")) {
      const std::size_t T = (shape[0] + 1) / 2;
      std::normal_distribution<double> normal(0.0, 0.02);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal(rng);
      t[T - 1] = 1.0;
    } else if (ends_with(".weight") || ends_with(".w1") || ends_with(".w2")) {
      // dwconv weight is K x d with fan-in K; the rest are out x in.
      std::size_t fan_in = shape.size() == 2 ? shape[1] : shape[0];
      if (ends_with("dwconv.weight")) fan_in = shape[0];
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> uniform(-bound, bound);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = uniform(rng);
    }
    params.emplace(path, std::move(t));
  }
  enforce_structure(params, cfg);
  return params;
}

void enforce_structure(ParamMap& params, const ModelConfig& cfg) {
  if (!cfg.max_lag || !has_toeplitz(cfg.variant)) return;
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    auto& lags = params.at(block_path(l, "toeplitz.lags"));
    lags.storage() = ToeplitzKernel::from_lags(lags.values(), cfg.max_lag).lags();
  }
}

ParamMap zeros_like(const ParamMap& params) {
  ParamMap out;
  for (const auto& [path, t] : params) out.emplace(path, Tensor(t.shape()));
  return out;
}

void validate_params(const ParamMap& params, const ModelConfig& cfg) {
  const auto shapes = param_shapes(cfg);
  for (const auto& [path, shape] : shapes) {
    const auto it = params.find(path);
    if (it == params.end()) throw CheckpointMismatch(path, "missing parameter '" + path + "'");
    if (it->second.shape() != shape) {
      throw CheckpointMismatch(path, "parameter '" + path + "' has shape " +
                                         shape_to_string(it->second.shape()) + ", expected " +
                                         shape_to_string(shape));
    }
  }
  for (const auto& [path, t] : params) {
    if (!shapes.count(path)) throw CheckpointMismatch(path, "unexpected parameter '" + path + "'");
  }
}

ParamCount param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d, h = cfg.hidden(), T = cfg.T, K = cfg.kernel_size;
  const std::size_t P = cfg.pool_grid;
  ParamCount c;
  c.stem = ModelConfig::kChannels * P * P * d + d;
  c.toeplitz_per_block = has_toeplitz(cfg.variant) ? 2 * T - 1 : 0;
  c.per_block = 2 * d            // LN_d
                + K * d + d      // depthwise conv
                + d * d + d      // pointwise projection
                + 2 * d          // LN_d before the MLP
                + 2 * d * h;     // MLP
  if (has_toeplitz(cfg.variant)) c.per_block += 2 * T + c.toeplitz_per_block;
  if (has_gate(cfg.variant)) c.per_block += d * d + d;
  c.head = 2 * d + d + 1;
  c.total = c.stem + cfg.blocks * c.per_block + c.head;
  return c;
}

std::size_t count_elements(const ParamMap& params) {
  std::size_t n = 0;
  for (const auto& [path, t] : params) n += t.size();
  return n;
}

Tensor stem_forward(const Tensor& x, const ParamMap& params, const ModelConfig& cfg,
                    StemCache* cache) {
  if (x.rank() != 5 || x.dim(2) != ModelConfig::kChannels) {
    throw DimensionError("stem: expected B x T x 3 x H x W, got " + shape_to_string(x.shape()));
  }
  const std::size_t B = x.dim(0), T = x.dim(1), C = x.dim(2), H = x.dim(3), W = x.dim(4);
  const std::size_t P = cfg.pool_grid;
  if (H % P != 0 || W % P != 0) {
    throw ConfigError("stem: frame " + std::to_string(H) + "x" + std::to_string(W) +
                      " not divisible by pooling grid " + std::to_string(P));
  }
  const std::size_t ch = H / P, cw = W / P;
  const double inv_cell = 1.0 / static_cast<double>(ch * cw);
  const std::size_t F = C * P * P;
  Tensor pooled({B, T, F});
  for (std::size_t bt = 0; bt < B * T; ++bt) {
    const double* frame = x.data() + bt * C * H * W;
    double* out = pooled.data() + bt * F;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        const double* row = frame + (c * H + y) * W;
        double* cells = out + (c * P + y / ch) * P;
        for (std::size_t xcol = 0; xcol < W; ++xcol) cells[xcol / cw] += row[xcol];
      }
    }
    for (std::size_t f = 0; f < F; ++f) out[f] *= inv_cell;
  }
  const Tensor& bias = param(params, "stem.bias");
  Tensor pre = nn::pointwise_linear(pooled, param(params, "stem.weight"), &bias);
  Tensor z = nn::activation(pre, nn::Activation::silu);
  if (cache) {
    cache->pooled = std::move(pooled);
    cache->pre = std::move(pre);
  }
  return z;
}

void stem_backward(const Tensor& dz, const StemCache& cache, const ParamMap& params,
                   ParamMap& grads) {
  const Tensor dpre = nn::activation_backward(dz, cache.pre, nn::Activation::silu);
  auto g = nn::pointwise_linear_backward(dpre, cache.pooled, param(params, "stem.weight"), true);
  accumulate(grads, "stem.weight", g.dweight);
  accumulate(grads, "stem.bias", g.dbias);
}

ToeplitzKernel block_kernel(const ParamMap& params, const ModelConfig& cfg, std::size_t block) {
  return ToeplitzKernel::from_lags(param(params, block_path(block, "toeplitz.lags")).values(),
                                   cfg.max_lag);
}

Tensor mixer_block_forward(const Tensor& h, const ParamMap& params, const ModelConfig& cfg,
                           std::size_t block, bool training, Rng* rng, BlockCache* cache) {
  check_variant_params(params, cfg, block);
  const auto p = [&](const char* leaf) -> const Tensor& {
    return param(params, block_path(block, leaf));
  };
  BlockCache local;
  BlockCache& c = cache ? *cache : local;

  c.normed = nn::layer_norm_d(h, p("ln_in.gamma"), p("ln_in.beta"), nn::kLayerNormEps, &c.ln_in);

  c.conv_out = nn::dwconv1d(c.normed, p("dwconv.weight"), p("dwconv.bias"));
  c.conv_act = nn::activation(c.conv_out, nn::Activation::silu);
  Tensor mid = nn::pointwise_linear(c.conv_act, p("pw.weight"), &p("pw.bias"));
  add_inplace(mid, h);

  if (has_toeplitz(cfg.variant)) {
    c.mix_in = nn::layer_norm_t(c.normed, p("ln_time.gamma"), p("ln_time.beta"),
                                nn::kLayerNormEps, &c.ln_time);
    c.mixed = toeplitz_mix(c.mix_in, block_kernel(params, cfg, block));
    if (has_gate(cfg.variant)) {
      c.gate_pre = nn::pointwise_linear(c.normed, p("gate.weight"), &p("gate.bias"));
      c.gate = nn::activation(c.gate_pre, nn::Activation::sigmoid);
      for (std::size_t i = 0; i < mid.size(); ++i) mid[i] += c.gate[i] * c.mixed[i];
    } else {
      add_inplace(mid, c.mixed);
    }
  }

  c.mid_normed =
      nn::layer_norm_d(mid, p("ln_mid.gamma"), p("ln_mid.beta"), nn::kLayerNormEps, &c.ln_mid);
  c.hidden_pre = nn::pointwise_linear(c.mid_normed, p("mlp.w1"), nullptr);
  c.hidden_act = nn::activation(c.hidden_pre, nn::Activation::silu);
  if (training && cfg.dropout_p > 0.0) {
    if (!rng) throw ConfigError("mixer block: training-mode dropout needs an RNG");
    c.hidden_out = nn::dropout(c.hidden_act, cfg.dropout_p, true, *rng, &c.drop);
  } else {
    c.drop.scale.clear();
    c.hidden_out = c.hidden_act;
  }
  Tensor out = nn::pointwise_linear(c.hidden_out, p("mlp.w2"), nullptr);
  add_inplace(out, mid);
  return out;
}

Tensor mixer_block_backward(const Tensor& dout, const BlockCache& c, const ParamMap& params,
                            const ModelConfig& cfg, std::size_t block, ParamMap& grads) {
  const auto path = [&](const char* leaf) { return block_path(block, leaf); };
  const auto p = [&](const char* leaf) -> const Tensor& { return param(params, path(leaf)); };

  // MLP branch: out = mid + W2 drop(silu(W1 LN(mid))).
  auto g_w2 = nn::pointwise_linear_backward(dout, c.hidden_out, p("mlp.w2"), false);
  accumulate(grads, path("mlp.w2"), g_w2.dweight);
  Tensor d_hidden = nn::dropout_backward(g_w2.dx, c.drop);
  d_hidden = nn::activation_backward(d_hidden, c.hidden_pre, nn::Activation::silu);
  auto g_w1 = nn::pointwise_linear_backward(d_hidden, c.mid_normed, p("mlp.w1"), false);
  accumulate(grads, path("mlp.w1"), g_w1.dweight);
  auto g_ln_mid = nn::layer_norm_d_backward(g_w1.dx, p("ln_mid.gamma"), c.ln_mid);
  accumulate(grads, path("ln_mid.gamma"), g_ln_mid.dgamma);
  accumulate(grads, path("ln_mid.beta"), g_ln_mid.dbeta);
  Tensor dmid = dout;
  add_inplace(dmid, g_ln_mid.dx);

  // Local branch: U = PW(silu(DWConv(normed))).
  auto g_pw = nn::pointwise_linear_backward(dmid, c.conv_act, p("pw.weight"), true);
  accumulate(grads, path("pw.weight"), g_pw.dweight);
  accumulate(grads, path("pw.bias"), g_pw.dbias);
  const Tensor d_conv = nn::activation_backward(g_pw.dx, c.conv_out, nn::Activation::silu);
  auto g_conv = nn::dwconv1d_backward(d_conv, c.normed, p("dwconv.weight"));
  accumulate(grads, path("dwconv.weight"), g_conv.dweight);
  accumulate(grads, path("dwconv.bias"), g_conv.dbias);
  Tensor d_normed = std::move(g_conv.dx);

  if (has_toeplitz(cfg.variant)) {
    Tensor d_mixed(dmid.shape());
    if (has_gate(cfg.variant)) {
      Tensor d_gate(dmid.shape());
      for (std::size_t i = 0; i < dmid.size(); ++i) {
        d_mixed[i] = dmid[i] * c.gate[i];
        d_gate[i] = dmid[i] * c.mixed[i];
      }
      const Tensor d_gate_pre =
          nn::activation_backward(d_gate, c.gate_pre, nn::Activation::sigmoid);
      auto g_gate = nn::pointwise_linear_backward(d_gate_pre, c.normed, p("gate.weight"), true);
      accumulate(grads, path("gate.weight"), g_gate.dweight);
      accumulate(grads, path("gate.bias"), g_gate.dbias);
      add_inplace(d_normed, g_gate.dx);
    } else {
      d_mixed = dmid;
    }
    const auto kernel = block_kernel(params, cfg, block);
    auto g_mix = toeplitz_mix_backward(d_mixed, c.mix_in, kernel);
    const auto d_lags = lag_gradient(g_mix.dc, g_mix.dr);
    accumulate(grads, path("toeplitz.lags"), Tensor({d_lags.size()}, d_lags));
    auto g_ln_time = nn::layer_norm_t_backward(g_mix.dq, p("ln_time.gamma"), c.ln_time);
    accumulate(grads, path("ln_time.gamma"), g_ln_time.dgamma);
    accumulate(grads, path("ln_time.beta"), g_ln_time.dbeta);
    add_inplace(d_normed, g_ln_time.dx);
  }

  auto g_ln_in = nn::layer_norm_d_backward(d_normed, p("ln_in.gamma"), c.ln_in);
  accumulate(grads, path("ln_in.gamma"), g_ln_in.dgamma);
  accumulate(grads, path("ln_in.beta"), g_ln_in.dbeta);
  add_inplace(dmid, g_ln_in.dx);
  return dmid;
}

Tensor model_forward(const Tensor& x, const ParamMap& params, const ModelConfig& cfg,
                     bool training, Rng* rng, ModelCache* cache) {
  if (x.rank() != 5 || x.dim(1) != cfg.T) {
    throw DimensionError("model: expected B x " + std::to_string(cfg.T) + " x 3 x H x W, got " +
                         shape_to_string(x.shape()));
  }
  Tensor h = stem_forward(x, params, cfg, cache ? &cache->stem : nullptr);
  if (cache) cache->blocks.assign(cfg.blocks, BlockCache{});
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    h = mixer_block_forward(h, params, cfg, l, training, rng, cache ? &cache->blocks[l] : nullptr);
  }

  const std::size_t B = h.dim(0), T = h.dim(1), d = h.dim(2);
  HeadCache local;
  HeadCache& hc = cache ? cache->head : local;
  hc.normed = nn::layer_norm_d(h, param(params, "head.ln.gamma"), param(params, "head.ln.beta"),
                               nn::kLayerNormEps, &hc.ln);
  const Tensor& w = param(params, "head.weight");
  const double bias = param(params, "head.bias")[0];
  Tensor pred({B, T});
  for (std::size_t bt = 0; bt < B * T; ++bt) {
    const double* row = hc.normed.data() + bt * d;
    double acc = bias;
    for (std::size_t j = 0; j < d; ++j) acc += w[j] * row[j];
    pred[bt] = acc;
  }
  return pred;
}

ParamMap model_backward(const Tensor& dpred, const ModelCache& cache, const ParamMap& params,
                        const ModelConfig& cfg) {
  const Tensor& normed = cache.head.normed;
  const std::size_t B = normed.dim(0), T = normed.dim(1), d = normed.dim(2);
  require_shape(dpred, {B, T}, "model_backward");
  ParamMap grads;

  const Tensor& w = param(params, "head.weight");
  Tensor dw({d}), db({1}), dnormed(normed.shape());
  for (std::size_t bt = 0; bt < B * T; ++bt) {
    const double up = dpred[bt];
    db[0] += up;
    for (std::size_t j = 0; j < d; ++j) {
      dw[j] += up * normed[bt * d + j];
      dnormed[bt * d + j] = up * w[j];
    }
  }
  accumulate(grads, "head.weight", dw);
  accumulate(grads, "head.bias", db);
  auto g_ln = nn::layer_norm_d_backward(dnormed, param(params, "head.ln.gamma"), cache.head.ln);
  accumulate(grads, "head.ln.gamma", g_ln.dgamma);
  accumulate(grads, "head.ln.beta", g_ln.dbeta);

  Tensor dh = std::move(g_ln.dx);
  for (std::size_t l = cfg.blocks; l-- > 0;) {
    dh = mixer_block_backward(dh, cache.blocks[l], params, cfg, l, grads);
  }
  stem_backward(dh, cache.stem, params, grads);
  return grads;
}

}  // namespace totm
