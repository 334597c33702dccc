#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace totm {

using Complex = std::complex<double>;
using ComplexArray = std::vector<Complex>;

constexpr bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

/// Smallest power of two >= n (n = 0 gives 1).
std::size_t next_power_of_two(std::size_t n);

/// Precomputed twiddles and bit-reversal table for radix-2 transforms of
/// one length. Immutable after construction, so one plan may be shared by
/// any number of threads.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const noexcept { return n_; }

  /// X[k] = sum_n x[n] exp(-2 pi i k n / N), in place.
  void forward(std::span<Complex> data) const;
  /// x[n] = (1/N) sum_k X[k] exp(+2 pi i k n / N), in place.
  void inverse(std::span<Complex> data) const;

 private:
  void transform(std::span<Complex> data, bool conjugate_twiddles) const;

  std::size_t n_;
  std::vector<Complex> twiddles_;
  std::vector<std::size_t> bit_reverse_;
};

/// Throws InvalidLength unless x.size() is a power of two.
ComplexArray fft_forward(ComplexArray x);
ComplexArray fft_inverse(ComplexArray x);

/// Full linear convolution (length a.size() + b.size() - 1) through a
/// zero-padded power-of-two transform.
std::vector<double> linear_convolve(std::span<const double> a, std::span<const double> b);

/// |DFT(zero-pad(x, n_fft))[k]|^2 for k = 0 .. n_fft/2.
std::vector<double> power_spectrum(std::span<const double> x, std::size_t n_fft);

}  // namespace totm
