#include "totm/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "totm/error.hpp"

namespace totm {

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (!is_power_of_two(n)) {
    throw InvalidLength("FFT length must be a power of two, got " + std::to_string(n));
  }
  // Direct evaluation of every twiddle keeps round-trip error near machine
  // precision at large N (a running product would drift).
  twiddles_.resize(std::max<std::size_t>(n / 2, 1));
  for (std::size_t k = 0; k < twiddles_.size(); ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = Complex(std::cos(angle), std::sin(angle));
  }
  unsigned bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  bit_reverse_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (unsigned b = 0; b < bits; ++b) {
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    }
    bit_reverse_[i] = r;
  }
}

void FftPlan::transform(std::span<Complex> data, bool conjugate_twiddles) const {
  if (data.size() != n_) {
    throw InvalidLength("FFT plan of length " + std::to_string(n_) + " applied to length " +
                        std::to_string(data.size()));
  }
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bit_reverse_[i];
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        Complex w = twiddles_[k * stride];
        if (conjugate_twiddles) w = std::conj(w);
        const Complex t = w * data[start + k + half];
        const Complex u = data[start + k];
        data[start + k] = u + t;
        data[start + k + half] = u - t;
      }
    }
  }
}

void FftPlan::forward(std::span<Complex> data) const { transform(data, false); }

void FftPlan::inverse(std::span<Complex> data) const {
  transform(data, true);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : data) v *= scale;
}

ComplexArray fft_forward(ComplexArray x) {
  FftPlan(x.size()).forward(x);
  return x;
}

ComplexArray fft_inverse(ComplexArray x) {
  FftPlan(x.size()).inverse(x);
  return x;
}

std::vector<double> linear_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidLength("linear_convolve: empty input");
  const std::size_t out_len = a.size() + b.size() - 1;
  const FftPlan plan(next_power_of_two(out_len));
  ComplexArray fa(plan.size()), fb(plan.size());
  std::copy(a.begin(), a.end(), fa.begin());
  std::copy(b.begin(), b.end(), fb.begin());
  plan.forward(fa);
  plan.forward(fb);
  for (std::size_t k = 0; k < plan.size(); ++k) fa[k] *= fb[k];
  plan.inverse(fa);

  std::vector<double> out(out_len);
  double max_re = 0.0, max_im = 0.0;
  for (std::size_t k = 0; k < out_len; ++k) {
    out[k] = fa[k].real();
    max_re = std::max(max_re, std::abs(fa[k].real()));
    max_im = std::max(max_im, std::abs(fa[k].imag()));
  }
  if (max_im >= 1e-9 * (1.0 + max_re)) {
    throw std::logic_error("linear_convolve: imaginary residue " + std::to_string(max_im));
  }
  return out;
}

std::vector<double> power_spectrum(std::span<const double> x, std::size_t n_fft) {
  if (n_fft < x.size()) {
    throw InvalidLength("power_spectrum: n_fft " + std::to_string(n_fft) +
                        " shorter than signal " + std::to_string(x.size()));
  }
  const FftPlan plan(n_fft);
  ComplexArray buf(n_fft);
  std::copy(x.begin(), x.end(), buf.begin());
  plan.forward(buf);
  std::vector<double> out(n_fft / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::norm(buf[k]);
  return out;
}

}  // namespace totm
