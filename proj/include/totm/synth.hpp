#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "totm/rng.hpp"
#include "totm/tensor.hpp"

namespace totm {

/// Synthetic pulse-video generator settings.
struct SynthConfig {
  double fs = 30.0;
  std::size_t T = 180;
  std::size_t H = 12;
  std::size_t W = 12;
  double hr_lo_bpm = 45.0;
  double hr_hi_bpm = 150.0;
  double hr_drift = 0.5;  // max |slope| in bpm per second
  std::size_t harmonics = 2;
  double second_harmonic_amp = 0.3;  // h-th harmonic gets amp^(h-1)
  double modulation_amp = 0.05;
  double illum_drift_amp = 0.02;
  double noise_sigma = 0.01;
  std::size_t motion_jitter = 0;
  std::uint64_t seed = 0;

  void validate() const;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

enum class Split { train, val, test };
enum class Domain { A, B };

const char* to_string(Split s) noexcept;
const char* to_string(Domain d) noexcept;
Split parse_split(const std::string& s);
Domain parse_domain(const std::string& s);

struct SynthClip {
  Tensor frames;            // T x 3 x H x W
  std::vector<double> bvp;  // zero mean, unit variance
  double hr_bpm = 0.0;      // clip-mean heart rate
};

struct Bvp {
  std::vector<double> wave;
  double hr_bpm = 0.0;
};

/// Harmonic pulse waveform with a linear heart-rate drift of random slope.
Bvp generate_bvp(const SynthConfig& cfg, Rng& rng);

/// Renders frames for a waveform. Scene parameters come from `rng`; pixel
/// noise and jitter use streams derived from one draw of it, so changing the
/// noise level or jitter leaves the scene untouched.
Tensor render_frames(std::span<const double> bvp, const SynthConfig& cfg, Rng& rng);

/// Nuisance settings used for a domain. B doubles noise and illumination
/// drift and forces nonzero jitter.
SynthConfig domain_config(const SynthConfig& cfg, Domain domain);

/// Clip `index` of a split; a pure function of (cfg.seed, split, domain, index).
SynthClip make_clip(const SynthConfig& cfg, Split split, Domain domain, std::size_t index);

std::vector<SynthClip> make_dataset(const SynthConfig& cfg, std::size_t n_clips, Split split,
                                    Domain domain);

/// Stacks clips [first, first+count) into B x T x 3 x H x W and B x T.
Tensor stack_frames(const std::vector<SynthClip>& clips, std::span<const std::size_t> order);
Tensor stack_bvp(const std::vector<SynthClip>& clips, std::span<const std::size_t> order);

struct ClipExport {
  std::filesystem::path manifest;
  std::filesystem::path binary;
};

/// Writes clip_NNNNN.json (manifest) and clip_NNNNN.bin (little-endian
/// float64 frames followed by bvp).
ClipExport export_clip(const std::filesystem::path& dir, std::size_t index, const SynthClip& clip,
                       const SynthConfig& cfg, Split split, Domain domain);

/// Reads back a clip written by export_clip.
SynthClip import_clip(const std::filesystem::path& manifest);

}  // namespace totm
