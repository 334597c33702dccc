#include <gtest/gtest.h>

#include <set>

#include "test_util.hpp"
#include "totm/check.hpp"
#include "totm/error.hpp"
#include "totm/model.hpp"
#include "totm/nn.hpp"

using namespace totm;
using totm::testing::fd_error;
using totm::testing::random_tensor;

namespace {

ModelConfig small_config(Variant v = Variant::full) {
  ModelConfig c;
  c.d = 8;
  c.blocks = 2;
  c.T = 12;
  c.pool_grid = 3;
  c.dropout_p = 0.0;
  c.variant = v;
  return c;
}

std::set<std::string> paths(const ParamMap& p) {
  std::set<std::string> out;
  for (const auto& [k, v] : p) out.insert(k);
  return out;
}

void zero_all(ParamMap& p) {
  for (auto& [k, v] : p) v.fill(0.0);
}

}  // namespace

TEST(Stem, ConstantFramePoolsToConstant) {
  ModelConfig c = small_config();
  const ParamMap params = init_params(c, 1);
  const Tensor x({1, c.T, 3, 6, 6}, 0.7);
  StemCache cache;
  const Tensor z = stem_forward(x, params, c, &cache);
  for (double v : cache.pooled.values()) EXPECT_NEAR(v, 0.7, 1e-15);
  const Tensor pooled({1, 1, 27}, 0.7);
  const Tensor expected = nn::activation(
      nn::pointwise_linear(pooled, params.at("stem.weight"), &params.at("stem.bias")), nn::Activation::silu);
  for (std::size_t t = 0; t < c.T; ++t)
    for (std::size_t j = 0; j < c.d; ++j) EXPECT_NEAR(z.at(0, t, j), expected[j], 1e-14);
}

TEST(Stem, ZeroFramesGiveZeroEmbedding) {
  ModelConfig c = small_config();
  const ParamMap params = init_params(c, 2);
  const Tensor z = stem_forward(Tensor({2, c.T, 3, 6, 6}), params, c);
  for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Stem, RejectsIndivisibleFrames) {
  ModelConfig c = small_config();
  EXPECT_THROW(stem_forward(Tensor({1, c.T, 3, 7, 6}), init_params(c, 3), c), ConfigError);
}

TEST(Stem, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  ModelConfig c = small_config();
  c.T = 4;
  c.pool_grid = 6;
  ParamMap params = init_params(c, 5);
  params.at("stem.bias") = random_tensor({c.d}, rng);
  const Tensor x = random_tensor({1, 4, 3, 12, 12}, rng);
  const Tensor up = random_tensor({1, 4, c.d}, rng);
  StemCache cache;
  stem_forward(x, params, c, &cache);
  ParamMap grads;
  stem_backward(up, cache, params, grads);
  const auto f = [&] { return dot(stem_forward(x, params, c), up); };
  EXPECT_LT(fd_error(params.at("stem.weight").values(), grads.at("stem.weight").values(), f), 1e-6);
  EXPECT_LT(fd_error(params.at("stem.bias").values(), grads.at("stem.bias").values(), f), 1e-6);
}

TEST(MixerBlock, ZeroBranchesGiveResidualIdentity) {
  std::mt19937_64 rng(6);
  for (const auto v : {Variant::full, Variant::no_gate, Variant::local_only}) {
    ModelConfig c = small_config(v);
    ParamMap params = init_params(c, 7);
    params.at("block.0.pw.weight").fill(0.0);
    params.at("block.0.mlp.w2").fill(0.0);
    if (v != Variant::local_only) params.at("block.0.toeplitz.lags").fill(0.0);
    if (v == Variant::full) params.at("block.0.gate.weight").fill(0.0);
    const Tensor h = random_tensor({2, c.T, c.d}, rng);
    EXPECT_EQ(mixer_block_forward(h, params, c, 0, false, nullptr), h) << to_string(v);
  }
}

TEST(MixerBlock, NoGateIdentityKernelAddsNormalizedInput) {
  std::mt19937_64 rng(8);
  ModelConfig c = small_config(Variant::no_gate);
  ParamMap params = init_params(c, 9);
  params.at("block.0.pw.weight").fill(0.0);
  params.at("block.0.mlp.w2").fill(0.0);
  auto& lags = params.at("block.0.toeplitz.lags");
  lags.fill(0.0);
  lags[c.T - 1] = 1.0;
  const Tensor h = random_tensor({2, c.T, c.d}, rng);
  const Tensor normed = nn::layer_norm_d(h, Tensor({c.d}, 1.0), Tensor({c.d}, 0.0));
  Tensor expected = nn::layer_norm_t(normed, Tensor({c.T}, 1.0), Tensor({c.T}, 0.0));
  add_inplace(expected, h);
  EXPECT_LT(max_abs_diff(mixer_block_forward(h, params, c, 0, false, nullptr), expected), 1e-12);
}

TEST(MixerBlock, GateStaysInsideUnitInterval) {
  std::mt19937_64 rng(10);
  ModelConfig c = small_config();
  ParamMap params = init_params(c, 11);
  params.at("block.0.gate.bias") = random_tensor({c.d}, rng);
  BlockCache cache;
  mixer_block_forward(random_tensor({2, c.T, c.d}, rng, 3.0), params, c, 0, false, nullptr, &cache);
  for (double g : cache.gate.values()) {
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
  }
  // Saturated pre-activations round to the closed interval, never beyond it.
  for (auto& v : params.at("block.0.gate.weight").storage()) v *= 1e4;
  mixer_block_forward(random_tensor({2, c.T, c.d}, rng, 3.0), params, c, 0, false, nullptr, &cache);
  for (double g : cache.gate.values()) {
    EXPECT_GE(g, 0.0);
    EXPECT_LE(g, 1.0);
  }
}

TEST(MixerBlock, GradientsMatchFiniteDifferences) {
  Rng rng(12);
  ModelConfig c = small_config();
  c.blocks = 1;
  for (const auto v : {Variant::full, Variant::no_gate, Variant::local_only}) {
    c.variant = v;
    for (const auto& r : check::block_gradients(c, 2, rng)) {
      EXPECT_LT(r.rel_error, 1e-6) << to_string(v) << " " << r.name;
    }
  }
}

TEST(MixerBlock, RejectsVariantParamMismatch) {
  ModelConfig full = small_config(Variant::full);
  ModelConfig local = small_config(Variant::local_only);
  const Tensor h({1, full.T, full.d});
  EXPECT_THROW(mixer_block_forward(h, init_params(local, 1), full, 0, false, nullptr), ConfigError);
  EXPECT_THROW(mixer_block_forward(h, init_params(full, 1), local, 0, false, nullptr), ConfigError);
}

TEST(Model, ConstantHead) {
  ModelConfig c = small_config();
  ParamMap params = init_params(c, 13);
  zero_all(params);
  params.at("head.bias")[0] = 3.0;
  std::mt19937_64 rng(14);
  const Tensor y = model_forward(random_tensor({2, c.T, 3, 6, 6}, rng), params, c, false, nullptr);
  ASSERT_EQ(y.shape(), (Shape{2, c.T}));
  for (double v : y.values()) EXPECT_EQ(v, 3.0);
}

TEST(Model, LocalOnlyMatchesFullWithSilentGlobalBranch) {
  ModelConfig full = small_config(Variant::full);
  ModelConfig local = small_config(Variant::local_only);
  ParamMap pf = init_params(full, 15);
  ParamMap pl = init_params(local, 16);
  for (auto& [path, t] : pl) t = pf.at(path);
  for (std::size_t l = 0; l < full.blocks; ++l) {
    pf.at(block_path(l, "toeplitz.lags")).fill(0.0);
    pf.at(block_path(l, "gate.weight")).fill(0.0);
  }
  std::mt19937_64 rng(17);
  const Tensor x = random_tensor({2, full.T, 3, 6, 6}, rng);
  EXPECT_EQ(model_forward(x, pf, full, false, nullptr), model_forward(x, pl, local, false, nullptr));
}

TEST(Model, TinyConfigGradientsMatchFiniteDifferences) {
  Rng rng(18);
  ModelConfig c;
  c.d = 4;
  c.blocks = 2;
  c.T = 8;
  c.pool_grid = 3;
  for (const auto v : {Variant::full, Variant::no_gate, Variant::local_only}) {
    c.variant = v;
    for (const auto& r : check::model_gradients(c, 6, rng))
      EXPECT_LT(r.rel_error, 1e-5) << to_string(v) << " " << r.name;
  }
}

// Without the gate, the time-norm bias adds one value per time step to every
// channel; each later read of the stream is feature-normalized, so it is inert.
TEST(Model, UngatedTimeNormBiasHasNoGradient) {
  ModelConfig c;
  c.d = 4;
  c.blocks = 2;
  c.T = 8;
  c.pool_grid = 3;
  c.dropout_p = 0.0;
  c.variant = Variant::no_gate;
  std::mt19937_64 rng(31);
  ParamMap params = init_params(c, 32);
  for (auto& [path, t] : params)
    for (auto& v : t.storage()) v += 0.3 * random_tensor({1}, rng)[0];
  enforce_structure(params, c);
  const Tensor x = random_tensor({2, c.T, 3, 6, 6}, rng);
  ModelCache cache;
  model_forward(x, params, c, false, nullptr, &cache);
  const ParamMap grads = model_backward(random_tensor({2, c.T}, rng), cache, params, c);
  for (std::size_t l = 0; l < c.blocks; ++l) {
    for (double g : grads.at(block_path(l, "ln_time.beta")).values()) EXPECT_LT(std::abs(g), 1e-12);
    double gamma_norm = 0;
    for (double g : grads.at(block_path(l, "ln_time.gamma")).values()) gamma_norm += g * g;
    EXPECT_GT(gamma_norm, 1e-6);
  }
}

TEST(Model, EvalForwardIsDeterministic) {
  ModelConfig c = small_config();
  c.dropout_p = 0.3;
  const ParamMap params = init_params(c, 19);
  std::mt19937_64 rng(20);
  const Tensor x = random_tensor({2, c.T, 3, 6, 6}, rng);
  Rng r1(1), r2(99);
  EXPECT_EQ(model_forward(x, params, c, false, &r1), model_forward(x, params, c, false, &r2));
  EXPECT_EQ(model_forward(x, params, c, false, nullptr), model_forward(x, params, c, false, nullptr));
}

TEST(Model, RejectsWrongInputShape) {
  ModelConfig c = small_config();
  const ParamMap params = init_params(c, 21);
  EXPECT_THROW(model_forward(Tensor({2, c.T + 1, 3, 6, 6}), params, c, false, nullptr), DimensionError);
  EXPECT_THROW(model_forward(Tensor({2, c.T, 6, 6}), params, c, false, nullptr), DimensionError);
}

TEST(Params, InitialKernelIsNearIdentity) {
  ModelConfig c = small_config();
  const ParamMap params = init_params(c, 22);
  const auto& lags = params.at("block.1.toeplitz.lags");
  ASSERT_EQ(lags.size(), 2 * c.T - 1);
  EXPECT_EQ(lags[c.T - 1], 1.0);
  for (std::size_t i = 0; i < lags.size(); ++i) {
    if (i != c.T - 1) EXPECT_LT(std::abs(lags[i]), 0.2);
  }
  EXPECT_EQ(init_params(c, 22), params);
  EXPECT_NE(init_params(c, 23), params);
}

TEST(Params, VariantContainment) {
  const auto full = paths(init_params(small_config(Variant::full), 1));
  const auto no_gate = paths(init_params(small_config(Variant::no_gate), 1));
  const auto local = paths(init_params(small_config(Variant::local_only), 1));
  EXPECT_TRUE(std::includes(full.begin(), full.end(), no_gate.begin(), no_gate.end()));
  EXPECT_TRUE(std::includes(no_gate.begin(), no_gate.end(), local.begin(), local.end()));
  EXPECT_LT(local.size(), no_gate.size());
  EXPECT_LT(no_gate.size(), full.size());
  for (const auto& p : local) {
    EXPECT_EQ(p.find("toeplitz"), std::string::npos) << p;
    EXPECT_EQ(p.find("gate"), std::string::npos) << p;
  }
  for (const auto& p : no_gate) EXPECT_EQ(p.find("gate"), std::string::npos) << p;
}

TEST(Params, MaxLagZeroesDistantLags) {
  ModelConfig c = small_config();
  c.max_lag = 2;
  ParamMap params = init_params(c, 24);
  auto& lags = params.at("block.0.toeplitz.lags");
  for (auto& v : lags.storage()) v = 0.5;
  enforce_structure(params, c);
  for (std::size_t i = 0; i < lags.size(); ++i) {
    const std::size_t dist = i > c.T - 1 ? i - (c.T - 1) : (c.T - 1) - i;
    EXPECT_EQ(lags[i], dist <= 2 ? 0.5 : 0.0);
  }
  const auto k = block_kernel(params, c, 0);
  EXPECT_EQ(k.row()[0], k.column()[0]);
}

TEST(Params, ValidateNamesFirstMismatch) {
  ModelConfig c = small_config();
  ParamMap params = init_params(c, 25);
  EXPECT_NO_THROW(validate_params(params, c));
  params.at("block.1.pw.weight") = Tensor({c.d, c.d + 1});
  try {
    validate_params(params, c);
    FAIL() << "expected CheckpointMismatch";
  } catch (const CheckpointMismatch& e) {
    EXPECT_EQ(e.path(), "block.1.pw.weight");
  }
  EXPECT_THROW(validate_params(init_params(small_config(Variant::local_only), 1), c), CheckpointMismatch);
}

TEST(ParamCount, ToeplitzBranchHas2TMinus1) {
  ModelConfig c;
  EXPECT_EQ(param_count(c).toeplitz_per_block, 359u);
  c.T = 57;
  EXPECT_EQ(param_count(c).toeplitz_per_block, 113u);
  c.variant = Variant::local_only;
  EXPECT_EQ(param_count(c).toeplitz_per_block, 0u);
}

TEST(ParamCount, DegenerateConfigByHand) {
  ModelConfig c;
  c.d = 1;
  c.blocks = 1;
  c.T = 1;
  c.kernel_size = 1;
  c.mlp_ratio = 1.0;
  c.pool_grid = 1;
  // stem 3+1; block LN 2, conv 1+1, pw 1+1, LN_T 2, lags 1, gate 1+1, LN 2, mlp 2; head 2+1+1
  const auto count = param_count(c);
  EXPECT_EQ(count.stem, 4u);
  EXPECT_EQ(count.per_block, 15u);
  EXPECT_EQ(count.head, 4u);
  EXPECT_EQ(count.total, 23u);
  EXPECT_EQ(count_elements(init_params(c, 1)), 23u);
}

TEST(ParamCount, DefaultConfigFormulaEqualsEnumeration) {
  ModelConfig c;
  EXPECT_EQ(c.hidden(), 96u);
  EXPECT_EQ(param_count(c).total, count_elements(init_params(c, 1)));
  EXPECT_EQ(param_count(c).total, 31470u);
}

TEST(ParamCount, RandomConfigsFormulaEqualsEnumeration) {
  Rng rng(26);
  for (int i = 0; i < 20; ++i) {
    const auto cc = check::param_count_case(rng);
    EXPECT_EQ(cc.formula, cc.enumerated);
  }
}
