#include "totm/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

namespace totm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Per-channel pulse coupling relative to modulation_amp: mostly green, a
// little red, none in blue.
constexpr double kChannelCoupling[3] = {0.3, 1.0, 0.0};

void standardize(std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  for (double& v : x) v = (v - mean) * inv;
}

std::uint64_t split_id(Split s) { return 0x5117ULL + static_cast<std::uint64_t>(s); }

void write_le(std::ofstream& os, const std::vector<double>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      char bytes[8];
      for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
      os.write(bytes, 8);
    }
  }
}

std::vector<double> read_le(std::ifstream& is, std::size_t count) {
  std::vector<double> out(count);
  std::vector<unsigned char> bytes(count * 8);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(is.gcount()) != bytes.size()) {
    throw std::runtime_error("clip binary shorter than its manifest declares");
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (!(fs > 0)) throw ConfigError("synth.fs must be positive");
  if (T < 2 || H < 1 || W < 1) throw ConfigError("synth clip dimensions too small");
  if (!(hr_lo_bpm >= 45.0 && hr_hi_bpm <= 150.0 && hr_lo_bpm < hr_hi_bpm)) {
    throw ConfigError("synth heart-rate range must lie within [45, 150] bpm");
  }
  const double duration = static_cast<double>(T) / fs;
  if (duration * hr_lo_bpm / 60.0 < 3.0) {
    throw ConfigError("synth clip must cover at least 3 pulse periods at the lowest heart rate");
  }
  if (hr_drift < 0) throw ConfigError("synth.hr_drift must be non-negative");
  if (hr_lo_bpm + hr_drift * duration >= hr_hi_bpm) {
    throw ConfigError("synth.hr_drift too large for the heart-rate range");
  }
  if (harmonics < 1) throw ConfigError("synth.harmonics must be >= 1");
  if (modulation_amp < 0 || illum_drift_amp < 0 || noise_sigma < 0) {
    throw ConfigError("synth amplitudes must be non-negative");
  }
  if (motion_jitter > std::min(H, W) / 4) {
    throw ConfigError("synth.motion_jitter too large for the frame size");
  }
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

const char* to_string(Domain d) noexcept { return d == Domain::A ? "A" : "B"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train, val, test)");
}

Domain parse_domain(const std::string& s) {
  if (s == "A") return Domain::A;
  if (s == "B") return Domain::B;
  throw ConfigError("unknown domain '" + s + "' (expected A or B)");
}

Bvp generate_bvp(const SynthConfig& cfg, Rng& rng) {
  const double duration = static_cast<double>(cfg.T) / cfg.fs;
  const double margin = cfg.hr_drift * duration / 2.0;
  std::uniform_real_distribution<double> hr_dist(cfg.hr_lo_bpm + margin, cfg.hr_hi_bpm - margin);
  std::uniform_real_distribution<double> slope_dist(-cfg.hr_drift, cfg.hr_drift);
  std::uniform_real_distribution<double> phase_dist(0.0, kTwoPi);

  const double hr_center = hr_dist(rng);
  const double slope = cfg.hr_drift > 0 ? slope_dist(rng) : 0.0;  // bpm per second
  std::vector<double> phases(cfg.harmonics);
  for (auto& ph : phases) ph = phase_dist(rng);

  // hr(t) = hr_center + slope (t - t_mid); the cycle count is its integral / 60.
  const double t_mid = static_cast<double>(cfg.T - 1) / (2.0 * cfg.fs);
  Bvp out;
  out.wave.resize(cfg.T);
  double hr_sum = 0.0;
  for (std::size_t n = 0; n < cfg.T; ++n) {
    const double t = static_cast<double>(n) / cfg.fs;
    hr_sum += hr_center + slope * (t - t_mid);
    const double cycles = (hr_center * t + slope * (0.5 * t * t - t_mid * t)) / 60.0;
    double v = 0.0;
    double amp = 1.0;
    for (std::size_t h = 0; h < cfg.harmonics; ++h) {
      v += amp * std::sin(kTwoPi * static_cast<double>(h + 1) * cycles + phases[h]);
      amp *= cfg.second_harmonic_amp;
    }
    out.wave[n] = v;
  }
  standardize(out.wave);
  out.hr_bpm = hr_sum / static_cast<double>(cfg.T);
  return out;
}

Tensor render_frames(std::span<const double> bvp, const SynthConfig& cfg, Rng& rng) {
  const std::size_t T = bvp.size(), H = cfg.H, W = cfg.W;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double skin[3] = {0.55 + 0.2 * unit(rng), 0.35 + 0.15 * unit(rng), 0.25 + 0.15 * unit(rng)};
  const double background[3] = {0.15 + 0.15 * unit(rng), 0.15 + 0.15 * unit(rng),
                                0.15 + 0.15 * unit(rng)};
  const double illum_freq = 0.05 + 0.2 * unit(rng);
  const double illum_phase = kTwoPi * unit(rng);
  const std::uint64_t nuisance = rng();
  Rng noise_rng(derive_seed({nuisance, 1}));
  Rng jitter_rng(derive_seed({nuisance, 2}));
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto j = static_cast<long>(cfg.motion_jitter);
  std::uniform_int_distribution<long> shift(-j, j);

  const std::size_t top = H / 4, left = W / 4;
  const std::size_t rh = H - 2 * top, rw = W - 2 * left;

  Tensor frames({T, 3, H, W});
  for (std::size_t t = 0; t < T; ++t) {
    const double illum =
        1.0 + cfg.illum_drift_amp *
                  std::sin(kTwoPi * illum_freq * static_cast<double>(t) / cfg.fs + illum_phase);
    long dy = 0, dx = 0;
    if (j > 0) {
      dy = shift(jitter_rng);
      dx = shift(jitter_rng);
    }
    const std::size_t r0 = static_cast<std::size_t>(static_cast<long>(top) + dy);
    const std::size_t c0 = static_cast<std::size_t>(static_cast<long>(left) + dx);
    for (std::size_t c = 0; c < 3; ++c) {
      const double face = skin[c] * (1.0 + cfg.modulation_amp * kChannelCoupling[c] * bvp[t]);
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const bool inside = y >= r0 && y < r0 + rh && x >= c0 && x < c0 + rw;
          double v = (inside ? face : background[c]) * illum;
          // Always draw so the noise field is the same for every noise level.
          v += cfg.noise_sigma * noise(noise_rng);
          frames[((t * 3 + c) * H + y) * W + x] = v;
        }
      }
    }
  }
  return frames;
}

SynthConfig domain_config(const SynthConfig& cfg, Domain domain) {
  if (domain == Domain::A) return cfg;
  SynthConfig b = cfg;
  b.noise_sigma *= 2.0;
  b.illum_drift_amp *= 2.0;
  b.motion_jitter = std::max<std::size_t>(1, 2 * cfg.motion_jitter);
  return b;
}

SynthClip make_clip(const SynthConfig& cfg, Split split, Domain domain, std::size_t index) {
  // The domain is deliberately not part of the stream: clip i of domain B
  // is clip i of domain A with heavier nuisance.
  Rng rng(derive_seed({cfg.seed, split_id(split), index}));
  const SynthConfig dcfg = domain_config(cfg, domain);
  auto bvp = generate_bvp(dcfg, rng);
  SynthClip clip;
  clip.frames = render_frames(bvp.wave, dcfg, rng);
  clip.bvp = std::move(bvp.wave);
  clip.hr_bpm = bvp.hr_bpm;
  return clip;
}

std::vector<SynthClip> make_dataset(const SynthConfig& cfg, std::size_t n_clips, Split split,
                                    Domain domain) {
  cfg.validate();
  domain_config(cfg, domain).validate();
  if (n_clips < 1) throw ConfigError("dataset needs at least one clip");
  std::vector<SynthClip> clips(n_clips);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_clips); ++i) {
    clips[static_cast<std::size_t>(i)] = make_clip(cfg, split, domain, static_cast<std::size_t>(i));
  }
  return clips;
}

Tensor stack_frames(const std::vector<SynthClip>& clips, std::span<const std::size_t> order) {
  if (order.empty()) throw DimensionError("stack_frames: empty selection");
  const Shape& s = clips.at(order[0]).frames.shape();
  Tensor out({order.size(), s[0], s[1], s[2], s[3]});
  const std::size_t per = clips[order[0]].frames.size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& f = clips.at(order[i]).frames;
    require_shape(f, s, "stack_frames");
    std::copy(f.storage().begin(), f.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return out;
}

Tensor stack_bvp(const std::vector<SynthClip>& clips, std::span<const std::size_t> order) {
  if (order.empty()) throw DimensionError("stack_bvp: empty selection");
  const std::size_t T = clips.at(order[0]).bvp.size();
  Tensor out({order.size(), T});
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& b = clips.at(order[i]).bvp;
    if (b.size() != T) throw DimensionError("stack_bvp: clips differ in length");
    std::copy(b.begin(), b.end(), out.storage().begin() + static_cast<std::ptrdiff_t>(i * T));
  }
  return out;
}

ClipExport export_clip(const std::filesystem::path& dir, std::size_t index, const SynthClip& clip,
                       const SynthConfig& cfg, Split split, Domain domain) {
  char stem[32];
  std::snprintf(stem, sizeof stem, "clip_%05zu", index);
  ClipExport out{dir / (std::string(stem) + ".json"), dir / (std::string(stem) + ".bin")};

  std::ofstream bin(out.binary, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + out.binary.string());
  write_le(bin, clip.frames.storage());
  write_le(bin, clip.bvp);
  if (!bin) throw std::runtime_error("write failed for " + out.binary.string());

  nlohmann::ordered_json m;
  m["format_version"] = 1;
  m["binary"] = out.binary.filename().string();
  m["dtype"] = "float64";
  m["byte_order"] = "little";
  m["index"] = index;
  m["split"] = to_string(split);
  m["domain"] = to_string(domain);
  m["seed"] = cfg.seed;
  m["fs"] = cfg.fs;
  m["hr_bpm"] = clip.hr_bpm;
  m["frames"] = {{"shape", clip.frames.shape()}, {"offset_bytes", 0}};
  m["bvp"] = {{"shape", {clip.bvp.size()}},
              {"offset_bytes", clip.frames.size() * sizeof(double)}};
  std::ofstream js(out.manifest, std::ios::trunc);
  if (!js) throw std::runtime_error("cannot write " + out.manifest.string());
  js << m.dump(2) << '\n';
  return out;
}

SynthClip import_clip(const std::filesystem::path& manifest) {
  std::ifstream js(manifest);
  if (!js) throw std::runtime_error("cannot read " + manifest.string());
  const auto m = nlohmann::json::parse(js);
  if (m.at("format_version").get<int>() != 1) throw std::runtime_error("unknown clip format");
  const auto frame_shape = m.at("frames").at("shape").get<Shape>();
  const auto bvp_len = m.at("bvp").at("shape").at(0).get<std::size_t>();
  std::ifstream bin(manifest.parent_path() / m.at("binary").get<std::string>(), std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read clip binary for " + manifest.string());
  SynthClip clip;
  clip.frames = Tensor(frame_shape, read_le(bin, shape_numel(frame_shape)));
  clip.bvp = read_le(bin, bvp_len);
  clip.hr_bpm = m.at("hr_bpm").get<double>();
  return clip;
}

}  // namespace totm
