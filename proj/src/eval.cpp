#include "totm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "totm/error.hpp"
#include "totm/fft.hpp"

namespace totm {

namespace {

std::vector<double> demeaned(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v -= mean;
  return out;
}

std::string format_value(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace

std::size_t hr_fft_length(std::size_t n) {
  return std::max<std::size_t>(4096, next_power_of_two(8 * n));
}

double estimate_hr_fft(std::span<const double> wave, double fs, Band band) {
  if (!(fs > 0)) throw ConfigError("estimate_hr_fft: fs must be positive");
  if (static_cast<double>(wave.size()) < 2.0 * fs) {
    throw InvalidLength("estimate_hr_fft: need at least 2 s of signal, got " +
                        std::to_string(wave.size()) + " samples");
  }
  if (!(band.lo_hz > 0 && band.lo_hz < band.hi_hz && band.hi_hz < fs / 2)) {
    throw ConfigError("estimate_hr_fft: band must satisfy 0 < lo < hi < fs/2");
  }
  const std::size_t n_fft = hr_fft_length(wave.size());
  const auto spectrum = power_spectrum(demeaned(wave), n_fft);
  const double bin_hz = fs / static_cast<double>(n_fft);
  const auto first = static_cast<std::size_t>(std::ceil(band.lo_hz / bin_hz));
  const auto last = static_cast<std::size_t>(std::floor(band.hi_hz / bin_hz));
  if (first > last) throw ConfigError("estimate_hr_fft: band contains no FFT bin");
  std::size_t best = first;
  for (std::size_t k = first + 1; k <= last; ++k) {
    if (spectrum[k] > spectrum[best]) best = k;
  }
  return 60.0 * static_cast<double>(best) * bin_hz;
}

bool snr_defined(double ref_hr_bpm, const SnrConfig& cfg) {
  const double f = ref_hr_bpm / 60.0;
  return f >= cfg.range.lo_hz &&
         static_cast<double>(cfg.harmonics) * f <= cfg.range.hi_hz;
}

double snr_db(std::span<const double> pred, double ref_hr_bpm, double fs, const SnrConfig& cfg) {
  if (static_cast<double>(pred.size()) < 2.0 * fs) {
    throw InvalidLength("snr_db: need at least 2 s of signal");
  }
  if (!snr_defined(ref_hr_bpm, cfg)) {
    throw OutOfBand("snr_db: reference rate " + std::to_string(ref_hr_bpm) +
                    " bpm outside the defined range");
  }
  auto x = demeaned(pred);
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    x[i] *= 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n)));
  }
  const std::size_t n_fft = hr_fft_length(n);
  const auto spectrum = power_spectrum(x, n_fft);
  const double bin_hz = fs / static_cast<double>(n_fft);
  const double f_ref = ref_hr_bpm / 60.0;
  double signal = 0.0, noise = 0.0;
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f < cfg.range.lo_hz || f > cfg.range.hi_hz) continue;
    bool in_signal = false;
    for (std::size_t h = 1; h <= cfg.harmonics; ++h) {
      if (std::abs(f - static_cast<double>(h) * f_ref) <= cfg.half_width_hz) in_signal = true;
    }
    (in_signal ? signal : noise) += spectrum[k];
  }
  return 10.0 * std::log10(signal / noise);
}

Metrics compute_metrics(std::span<const double> pred_hr, std::span<const double> ref_hr,
                        std::span<const double> snr_values) {
  if (pred_hr.empty() || pred_hr.size() != ref_hr.size()) {
    throw DimensionError("compute_metrics: need equal, non-empty prediction and reference arrays");
  }
  const std::size_t n = pred_hr.size();
  Metrics m;
  m.n_clips = n;
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(ref_hr[i] > 0)) throw ConfigError("compute_metrics: reference heart rate must be positive");
    const double delta = pred_hr[i] - ref_hr[i];
    abs_sum += std::abs(delta);
    sq_sum += delta * delta;
    pct_sum += std::abs(delta) / ref_hr[i];
  }
  const double dn = static_cast<double>(n);
  m.mae_bpm = abs_sum / dn;
  m.rmse_bpm = std::sqrt(sq_sum / dn);
  m.mape_pct = 100.0 * pct_sum / dn;

  if (n >= 2) {
    double mp = 0.0, mr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mp += pred_hr[i];
      mr += ref_hr[i];
    }
    mp /= dn;
    mr /= dn;
    double spr = 0.0, spp = 0.0, srr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      spr += (pred_hr[i] - mp) * (ref_hr[i] - mr);
      spp += (pred_hr[i] - mp) * (pred_hr[i] - mp);
      srr += (ref_hr[i] - mr) * (ref_hr[i] - mr);
    }
    if (spp > 0 && srr > 0) m.pearson = std::clamp(spr / std::sqrt(spp * srr), -1.0, 1.0);
  }
  if (!snr_values.empty()) {
    double s = 0.0;
    for (double v : snr_values) s += v;
    m.snr_db = s / static_cast<double>(snr_values.size());
  }
  return m;
}

std::string metrics_csv_header() {
  return "split,domain,n_clips,mae_bpm,rmse_bpm,mape_pct,pearson,snr_db";
}

std::string metrics_csv_row(const std::string& split, const std::string& domain, const Metrics& m) {
  return split + "," + domain + "," + std::to_string(m.n_clips) + "," + format_value(m.mae_bpm) +
         "," + format_value(m.rmse_bpm) + "," + format_value(m.mape_pct) + "," +
         format_value(m.pearson) + "," + format_value(m.snr_db);
}

}  // namespace totm
