#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "test_util.hpp"
#include "totm/checkpoint.hpp"
#include "totm/config.hpp"
#include "totm/error.hpp"
#include "totm/eval.hpp"
#include "totm/optim.hpp"
#include "totm/train.hpp"

using namespace totm;
using totm::testing::random_tensor;

namespace {

std::vector<double> sinusoid(double hz, double fs, std::size_t n, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * std::numbers::pi * hz * i / fs + phase);
  return x;
}

ParamMap random_params(std::mt19937_64& rng) {
  ParamMap p;
  p["a"] = random_tensor({3, 4}, rng);
  p["b"] = random_tensor({5}, rng);
  return p;
}

struct TinyRun {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
};

TinyRun tiny_run() {
  TinyRun r;
  r.model.d = 4;
  r.model.blocks = 1;
  r.model.T = 64;
  r.model.pool_grid = 3;
  r.synth.T = 64;
  r.synth.H = r.synth.W = 6;
  r.synth.hr_lo_bpm = 90;
  r.synth.seed = 3;
  r.train.batch_size = 4;
  r.train.epochs = 2;
  r.train.seed = 4;
  r.train.optim.lr = 3e-3;
  r.train.loss.stft.window_len = 32;
  r.train.loss.stft.hop = 8;
  return r;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(AdamStep, ZeroGradientsAreAFixedPoint) {
  std::mt19937_64 rng(1);
  ParamMap p = random_params(rng);
  const ParamMap before = p;
  AdamState state;
  for (std::size_t step = 1; step <= 3; ++step) adam_step(p, zeros_like(p), state, OptimizerConfig{}, step);
  EXPECT_EQ(p, before);
}

TEST(AdamStep, FirstStepMovesByLearningRate) {
  for (double g : {0.37, -12.0}) {
    ParamMap p{{"w", Tensor({1}, 2.0)}};
    AdamState state;
    OptimizerConfig cfg;
    cfg.lr = 0.01;
    adam_step(p, {{"w", Tensor({1}, g)}}, state, cfg, 1);
    EXPECT_NEAR(p.at("w")[0] - 2.0, -0.01 * (g > 0 ? 1 : -1), 1e-6);
  }
}

TEST(AdamStep, MomentsFollowTextbookRecurrence) {
  std::mt19937_64 rng(2);
  ParamMap p = random_params(rng);
  OptimizerConfig cfg;
  cfg.lr = 0.05;
  AdamState state;
  std::vector<double> m(12, 0.0), v(12, 0.0), w(p.at("a").storage());
  for (std::size_t t = 1; t <= 4; ++t) {
    const ParamMap g = random_params(rng);
    adam_step(p, g, state, cfg, t);
    for (std::size_t i = 0; i < 12; ++i) {
      const double gi = g.at("a")[i];
      m[i] = 0.9 * m[i] + (1 - 0.9) * gi;
      v[i] = 0.999 * v[i] + (1 - 0.999) * gi * gi;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.05 * (mh / (std::sqrt(vh) + 1e-8));
    }
    EXPECT_EQ(state.m.at("a").storage(), m);
    EXPECT_EQ(state.v.at("a").storage(), v);
    EXPECT_EQ(p.at("a").storage(), w);
  }
}

TEST(AdamStep, ZeroLearningRateIsIdentity) {
  std::mt19937_64 rng(3);
  ParamMap p = random_params(rng);
  const ParamMap before = p;
  OptimizerConfig cfg;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.1;
  AdamState state;
  adam_step(p, random_params(rng), state, cfg, 1);
  EXPECT_EQ(p, before);
}

TEST(AdamStep, ClipsGlobalNorm) {
  ParamMap p{{"w", Tensor({2}, 0.0)}};
  const ParamMap g{{"w", Tensor({2}, {30.0, 40.0})}};
  OptimizerConfig cfg;
  cfg.grad_clip = 5.0;
  AdamState state;
  adam_step(p, g, state, cfg, 1);
  EXPECT_NEAR(state.m.at("w")[0], 0.1 * 3.0, 1e-12);
  EXPECT_NEAR(state.m.at("w")[1], 0.1 * 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(global_norm(g), 50.0);
}

TEST(AdamStep, RejectsMisalignedGradients) {
  std::mt19937_64 rng(4);
  ParamMap p = random_params(rng);
  AdamState state;
  ParamMap g = zeros_like(p);
  g.erase("b");
  EXPECT_THROW(adam_step(p, g, state, OptimizerConfig{}, 1), ConfigError);
  g = zeros_like(p);
  g.at("b") = Tensor({6});
  EXPECT_THROW(adam_step(p, g, state, OptimizerConfig{}, 1), ConfigError);
  EXPECT_THROW(adam_step(p, zeros_like(p), state, OptimizerConfig{}, 0), ConfigError);
}

TEST(EstimateHr, PureSinusoids) {
  EXPECT_NEAR(estimate_hr_fft(sinusoid(1.2, 30, 300), 30), 72.0, 0.45);
  EXPECT_NEAR(estimate_hr_fft(sinusoid(1.0, 30, 300), 30), 60.0, 0.45);
  EXPECT_NEAR(estimate_hr_fft(sinusoid(2.0, 30, 180), 30), 120.0, 0.45);
}

TEST(EstimateHr, IgnoresStrongerOutOfBandComponent) {
  auto x = sinusoid(1.2, 30, 300);
  const auto y = sinusoid(5.0, 30, 300, 2.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  // The full spectrum peaks near 5 Hz; only the band restriction finds 1.2 Hz.
  const auto spectrum = power_spectrum(x, hr_fft_length(300));
  const auto global = std::max_element(spectrum.begin(), spectrum.end()) - spectrum.begin();
  EXPECT_NEAR(global * 30.0 / hr_fft_length(300), 5.0, 0.05);
  EXPECT_NEAR(estimate_hr_fft(x, 30), 72.0, 0.45);
}

TEST(EstimateHr, AmplitudeInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> scale(1e-6, 1e6);
  const Tensor noise = random_tensor({200}, rng);
  auto x = sinusoid(1.37, 30, 200);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.8 * noise[i];
  const double base = estimate_hr_fft(x, 30);
  for (int i = 0; i < 50; ++i) {
    auto y = x;
    const double s = scale(rng);
    for (auto& v : y) v *= s;
    EXPECT_EQ(estimate_hr_fft(y, 30), base);
  }
}

TEST(EstimateHr, RejectsShortSignal) {
  EXPECT_THROW(estimate_hr_fft(sinusoid(1.2, 30, 59), 30), InvalidLength);
}

TEST(Snr, PureToneIsStrong) {
  EXPECT_GT(snr_db(sinusoid(1.2, 30, 900), 72.0, 30), 20.0);
  EXPECT_GT(snr_db(sinusoid(1.7, 30, 1200), 102.0, 30), 20.0);
}

TEST(Snr, WhiteNoiseIsNegative) {
  std::mt19937_64 rng(6);
  double sum = 0;
  for (int i = 0; i < 200; ++i) {
    const Tensor x = random_tensor({900}, rng);
    sum += snr_db(x.values(), 72.0, 30);
  }
  EXPECT_LT(sum / 200, 0.0);
}

TEST(Snr, EqualPowerInterfererGivesZeroDb) {
  auto x = sinusoid(1.0, 30, 900);
  const auto y = sinusoid(3.2, 30, 900, 1.0, 0.4);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
  EXPECT_NEAR(snr_db(x, 60.0, 30), 0.0, 1.0);
}

TEST(Snr, UndefinedOutsideRange) {
  EXPECT_TRUE(snr_defined(72.0));
  EXPECT_TRUE(snr_defined(120.0));
  EXPECT_FALSE(snr_defined(130.0));
  EXPECT_FALSE(snr_defined(30.0));
  EXPECT_THROW(snr_db(sinusoid(2.2, 30, 300), 132.0, 30), OutOfBand);
}

TEST(Metrics, DirectArithmetic) {
  const std::vector<double> pred{72, 68}, ref{70, 70};
  const Metrics m = compute_metrics(pred, ref);
  EXPECT_DOUBLE_EQ(m.mae_bpm, 2.0);
  EXPECT_DOUBLE_EQ(m.rmse_bpm, 2.0);
  EXPECT_NEAR(m.mape_pct, 200.0 / 70.0, 1e-12);
  EXPECT_FALSE(m.pearson.has_value());  // constant reference
  EXPECT_FALSE(m.snr_db.has_value());
  EXPECT_EQ(m.n_clips, 2u);
}

TEST(Metrics, IdenticalArrays) {
  const std::vector<double> hr{60, 75, 90, 101.5};
  const Metrics m = compute_metrics(hr, hr);
  EXPECT_EQ(m.mae_bpm, 0.0);
  EXPECT_EQ(m.rmse_bpm, 0.0);
  EXPECT_EQ(m.mape_pct, 0.0);
  ASSERT_TRUE(m.pearson.has_value());
  EXPECT_NEAR(*m.pearson, 1.0, 1e-15);
}

TEST(Metrics, PearsonMatchesDirectFormulaAndJensen) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> hr(50, 140);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(17), b(17);
    for (auto& v : a) v = hr(rng);
    for (auto& v : b) v = hr(rng);
    const Metrics m = compute_metrics(a, b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < 17; ++i) ma += a[i] / 17, mb += b[i] / 17;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < 17; ++i) {
      cov += (a[i] - ma) * (b[i] - mb);
      va += (a[i] - ma) * (a[i] - ma);
      vb += (b[i] - mb) * (b[i] - mb);
    }
    EXPECT_NEAR(*m.pearson, cov / std::sqrt(va * vb), 1e-12);
    EXPECT_LE(m.mae_bpm, m.rmse_bpm);
  }
}

TEST(Metrics, CsvFormat) {
  EXPECT_EQ(metrics_csv_header(), "split,domain,n_clips,mae_bpm,rmse_bpm,mape_pct,pearson,snr_db");
  const std::vector<double> pred{72, 68}, ref{70, 70}, snr{1.5};
  EXPECT_EQ(metrics_csv_row("test", "A", compute_metrics(pred, ref, snr)),
            "test,A,2,2.000000,2.000000,2.857143,NA,1.500000");
}

TEST(Train, ZeroEpochsReturnsInitialParams) {
  TinyRun r = tiny_run();
  r.train.epochs = 0;
  const auto tr = make_dataset(r.synth, 4, Split::train, Domain::A);
  const auto va = make_dataset(r.synth, 2, Split::val, Domain::A);
  const TrainResult res = train(r.model, r.train, tr, va, r.synth.fs);
  EXPECT_TRUE(res.log.empty());
  EXPECT_EQ(res.final_params, res.initial);
  EXPECT_EQ(res.best, res.initial);
  EXPECT_EQ(res.best_epoch, 0u);
}

TEST(Train, DeterministicAndLogged) {
  const TinyRun r = tiny_run();
  const auto tr = make_dataset(r.synth, 8, Split::train, Domain::A);
  const auto va = make_dataset(r.synth, 4, Split::val, Domain::A);
  const TrainResult a = train(r.model, r.train, tr, va, r.synth.fs);
  const TrainResult b = train(r.model, r.train, tr, va, r.synth.fs);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.best, b.best);
  ASSERT_EQ(a.log.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(epoch_csv_row(a.log[i]), epoch_csv_row(b.log[i]));
  EXPECT_NE(a.final_params, a.initial);
  EXPECT_GE(a.best_epoch, 1u);
  // Toeplitz tie and structure survive every update.
  const auto k = block_kernel(a.final_params, r.model, 0);
  EXPECT_EQ(k.row()[0], k.column()[0]);
}

TEST(Train, NonFiniteInputDiverges) {
  const TinyRun r = tiny_run();
  auto tr = make_dataset(r.synth, 4, Split::train, Domain::A);
  const auto va = make_dataset(r.synth, 2, Split::val, Domain::A);
  TrainConfig cfg = r.train;
  cfg.epochs = 1;
  tr[1].frames[0] = std::nan("");
  EXPECT_THROW(train(r.model, cfg, tr, va, r.synth.fs), DivergenceError);
}

TEST(Train, EpochCsvHeader) {
  EXPECT_EQ(epoch_csv_header(), "epoch,loss_total,loss_mse,loss_rho,loss_spec,val_loss,val_mae_bpm");
}

TEST(Checkpoint, RoundTripIsExact) {
  ModelConfig cfg;
  cfg.d = 6;
  cfg.T = 20;
  cfg.max_lag = 4;
  const ParamMap params = init_params(cfg, 8);
  const auto path = temp_path("totm_ckpt_roundtrip.json");
  save_checkpoint(path, cfg, params);
  const Checkpoint back = load_checkpoint(path, cfg);
  EXPECT_EQ(back.params, params);
  EXPECT_EQ(back.config, cfg);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsWrongLayoutAndVersion) {
  ModelConfig cfg;
  cfg.d = 6;
  cfg.T = 20;
  ParamMap params = init_params(cfg, 9);
  params.at("head.weight") = Tensor({7});
  const auto path = temp_path("totm_ckpt_bad.json");
  save_checkpoint(path, cfg, params);
  try {
    load_checkpoint(path, cfg);
    FAIL() << "expected CheckpointMismatch";
  } catch (const CheckpointMismatch& e) {
    EXPECT_EQ(e.path(), "head.weight");
  }
  {
    std::ofstream os(path);
    os << R"({"format_version": 99, "config": {}, "tensors": {}})";
  }
  EXPECT_THROW(load_checkpoint(path), CheckpointMismatch);
  std::filesystem::remove(path);
}

TEST(Config, DefaultsAndRoundTrip) {
  const RunConfig defaults = parse_run_config(nlohmann::json::object());
  EXPECT_EQ(defaults, RunConfig{});
  RunConfig custom;
  custom.model.d = 12;
  custom.model.variant = Variant::no_gate;
  custom.model.max_lag = 7;
  custom.train.optim.grad_clip = 2.5;
  custom.train.loss.stft.p = 2.0;
  custom.synth.seed = 0xfeedfacecafebeefULL;
  custom.eval.snr.half_width_hz = 0.2;
  const auto text = to_json(custom).dump();
  EXPECT_EQ(parse_run_config(nlohmann::json::parse(text)), custom);
}

TEST(Config, UnknownKeyNamesItsPath) {
  const auto doc = nlohmann::json::parse(R"({"train": {"loss": {"stft": {"hopp": 4}}}})");
  try {
    parse_run_config(doc);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.loss.stft.hopp"), std::string::npos) << e.what();
  }
}

TEST(Config, CrossSectionChecks) {
  RunConfig cfg;
  cfg.model.T = 120;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.synth.T = 120;
  EXPECT_NO_THROW(cfg.validate());
  cfg.model.pool_grid = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"model": {"variant": "attention"}})")),
               ConfigError);
}
