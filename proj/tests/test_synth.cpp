#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <set>

#include "totm/error.hpp"
#include "totm/eval.hpp"
#include "totm/synth.hpp"

using namespace totm;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Temporal variance of each pixel, averaged over pixels.
double pixel_variance(const Tensor& frames) {
  const std::size_t T = frames.dim(0), per = frames.size() / T;
  double total = 0;
  for (std::size_t p = 0; p < per; ++p) {
    double mean = 0, sq = 0;
    for (std::size_t t = 0; t < T; ++t) mean += frames[t * per + p];
    mean /= T;
    for (std::size_t t = 0; t < T; ++t) sq += (frames[t * per + p] - mean) * (frames[t * per + p] - mean);
    total += sq / T;
  }
  return total / per;
}

std::size_t hash_clip(const SynthClip& c) {
  std::size_t h = 0;
  for (double v : c.frames.values()) h = h * 1099511628211ULL ^ std::hash<double>{}(v);
  return h;
}

}  // namespace

TEST(GenerateBvp, DriftFreeSinusoidPeaksAtItsRate) {
  SynthConfig cfg;
  cfg.T = 300;
  cfg.hr_drift = 0.0;
  cfg.harmonics = 1;
  cfg.hr_lo_bpm = 72.0 - 1e-9;
  cfg.hr_hi_bpm = 72.0 + 1e-9;
  Rng rng(1);
  const Bvp b = generate_bvp(cfg, rng);
  EXPECT_NEAR(b.hr_bpm, 72.0, 1e-6);
  EXPECT_NEAR(estimate_hr_fft(b.wave, cfg.fs), 72.0, 0.45);
  // 300 samples at 30 Hz put 1.2 Hz exactly on DFT bin 12.
  std::size_t best = 0;
  double best_power = -1;
  for (std::size_t k = 1; k <= 150; ++k) {
    double re = 0, im = 0;
    for (std::size_t n = 0; n < 300; ++n) {
      re += b.wave[n] * std::cos(2 * std::numbers::pi * k * n / 300.0);
      im -= b.wave[n] * std::sin(2 * std::numbers::pi * k * n / 300.0);
    }
    if (re * re + im * im > best_power) {
      best_power = re * re + im * im;
      best = k;
    }
  }
  EXPECT_EQ(best, 12u);
}

TEST(GenerateBvp, SeededDeterminismAndStandardization) {
  SynthConfig cfg;
  Rng a(7), b(7);
  const Bvp x = generate_bvp(cfg, a), y = generate_bvp(cfg, b);
  EXPECT_EQ(x.wave, y.wave);
  EXPECT_EQ(x.hr_bpm, y.hr_bpm);
  const double mean = std::accumulate(x.wave.begin(), x.wave.end(), 0.0) / x.wave.size();
  double var = 0;
  for (double v : x.wave) var += (v - mean) * (v - mean);
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var / x.wave.size(), 1.0, 1e-12);
}

TEST(GenerateBvp, EstimatorRecoversGeneratedRate) {
  SynthConfig cfg;
  Rng rng(11);
  std::size_t worst_index = 0;
  double worst = 0;
  for (std::size_t i = 0; i < 1000; ++i) {
    const Bvp b = generate_bvp(cfg, rng);
    ASSERT_GE(b.hr_bpm, 45.0);
    ASSERT_LE(b.hr_bpm, 150.0);
    const double err = std::abs(estimate_hr_fft(b.wave, cfg.fs) - b.hr_bpm);
    if (err > worst) {
      worst = err;
      worst_index = i;
    }
  }
  EXPECT_LE(worst, 1.5) << "sample " << worst_index;
}

TEST(RenderFrames, StaticSceneWithoutDynamics) {
  SynthConfig cfg;
  cfg.modulation_amp = 0;
  cfg.noise_sigma = 0;
  cfg.illum_drift_amp = 0;
  Rng rng(2);
  const Bvp b = generate_bvp(cfg, rng);
  const Tensor f = render_frames(b.wave, cfg, rng);
  const std::size_t per = 3 * cfg.H * cfg.W;
  for (std::size_t t = 1; t < cfg.T; ++t)
    for (std::size_t i = 0; i < per; ++i) ASSERT_EQ(f[t * per + i], f[i]);
}

TEST(RenderFrames, GreenRegionTracksPulse) {
  SynthConfig cfg;
  cfg.noise_sigma = 0;
  cfg.illum_drift_amp = 0;  // multiplicative illumination would add its own slow component
  Rng rng(3);
  const Bvp b = generate_bvp(cfg, rng);
  const Tensor f = render_frames(b.wave, cfg, rng);
  std::vector<double> green(cfg.T);
  for (std::size_t t = 0; t < cfg.T; ++t) {
    double s = 0;
    for (std::size_t y = 3; y < 9; ++y)
      for (std::size_t x = 3; x < 9; ++x) s += f[((t * 3 + 1) * cfg.H + y) * cfg.W + x];
    green[t] = s / 36.0;
  }
  const double mean = std::accumulate(green.begin(), green.end(), 0.0) / cfg.T;
  for (auto& v : green) v -= mean;
  EXPECT_GT(correlation(green, b.wave), 0.999);
}

TEST(RenderFrames, SeededDeterminism) {
  SynthConfig cfg;
  cfg.motion_jitter = 2;
  Rng a(4), b(4);
  const std::vector<double> wave(cfg.T, 0.5);
  EXPECT_EQ(render_frames(wave, cfg, a), render_frames(wave, cfg, b));
}

TEST(MakeDataset, Deterministic) {
  SynthConfig cfg;
  cfg.seed = 99;
  const auto a = make_dataset(cfg, 4, Split::train, Domain::A);
  const auto b = make_dataset(cfg, 4, Split::train, Domain::A);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].frames, b[i].frames);
    EXPECT_EQ(a[i].bvp, b[i].bvp);
    EXPECT_EQ(a[i].hr_bpm, b[i].hr_bpm);
  }
  const SynthClip single = make_clip(cfg, Split::train, Domain::A, 2);
  EXPECT_EQ(single.frames, a[2].frames);
}

TEST(MakeDataset, SplitsAreDisjoint) {
  SynthConfig cfg;
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto split : {Split::train, Split::val, Split::test}) {
    for (const auto& c : make_dataset(cfg, 16, split, Domain::A)) {
      seen.insert(hash_clip(c));
      ++total;
    }
  }
  EXPECT_EQ(seen.size(), total);
}

TEST(MakeDataset, DomainBIsNoisier) {
  SynthConfig cfg;
  cfg.seed = 5;
  const auto a = make_dataset(cfg, 12, Split::test, Domain::A);
  const auto b = make_dataset(cfg, 12, Split::test, Domain::B);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].bvp, b[i].bvp);
    EXPECT_GT(pixel_variance(b[i].frames), pixel_variance(a[i].frames)) << "clip " << i;
  }
}

TEST(MakeDataset, RejectsEmptyAndBadConfig) {
  SynthConfig cfg;
  EXPECT_THROW(make_dataset(cfg, 0, Split::train, Domain::A), ConfigError);
  cfg.hr_hi_bpm = 200;
  EXPECT_THROW(make_dataset(cfg, 1, Split::train, Domain::A), ConfigError);
  EXPECT_THROW(parse_domain("C"), ConfigError);
  EXPECT_THROW(parse_split("dev"), ConfigError);
}

TEST(ClipExport, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "totm_synth_export";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  SynthConfig cfg;
  const SynthClip clip = make_clip(cfg, Split::val, Domain::B, 3);
  const auto paths = export_clip(dir, 3, clip, cfg, Split::val, Domain::B);
  EXPECT_EQ(paths.manifest.filename(), "clip_00003.json");
  EXPECT_EQ(std::filesystem::file_size(paths.binary), (clip.frames.size() + clip.bvp.size()) * 8);
  const SynthClip back = import_clip(paths.manifest);
  EXPECT_EQ(back.frames, clip.frames);
  EXPECT_EQ(back.bvp, clip.bvp);
  EXPECT_EQ(back.hr_bpm, clip.hr_bpm);
  std::filesystem::remove_all(dir);
}
