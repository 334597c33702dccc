#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace totm {

struct Band {
  double lo_hz = 0.75;
  double hi_hz = 2.5;

  friend bool operator==(const Band&, const Band&) = default;
};

/// FFT length for heart-rate spectra: max(4096, next pow2 >= 8 n).
std::size_t hr_fft_length(std::size_t n);

/// Heart rate (bpm) at the in-band power-spectrum peak of the mean-removed,
/// zero-padded waveform. Ties resolve to the lower frequency.
double estimate_hr_fft(std::span<const double> wave, double fs, Band band = {});

struct SnrConfig {
  Band range{0.6, 4.0};
  double half_width_hz = 0.1;
  std::size_t harmonics = 2;

  friend bool operator==(const SnrConfig&, const SnrConfig&) = default;
};

/// Ratio (dB) of Hann-windowed spectral power within half_width of the
/// reference rate and its harmonics to the remaining power in `range`.
/// Throws OutOfBand when a harmonic window would leave `range`.
double snr_db(std::span<const double> pred, double ref_hr_bpm, double fs,
              const SnrConfig& cfg = {});

/// True when snr_db is defined for this reference rate.
bool snr_defined(double ref_hr_bpm, const SnrConfig& cfg = {});

struct Metrics {
  double mae_bpm = 0.0;
  double rmse_bpm = 0.0;
  double mape_pct = 0.0;
  std::optional<double> pearson;  // undefined for n < 2 or constant inputs
  std::optional<double> snr_db;   // mean over clips where it is defined
  std::size_t n_clips = 0;
};

Metrics compute_metrics(std::span<const double> pred_hr, std::span<const double> ref_hr,
                        std::span<const double> snr_values = {});

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& split, const std::string& domain, const Metrics& m);

}  // namespace totm
