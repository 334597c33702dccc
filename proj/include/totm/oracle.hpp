#pragma once

// Brute-force reference routines. Nothing here calls the FFT or the fast
// Toeplitz path; tests and the `check` command compare against these.

#include <functional>
#include <span>
#include <vector>

#include "totm/fft.hpp"
#include "totm/tensor.hpp"

namespace totm::oracle {

/// O(N^2) DFT, any length. inverse=true applies +i exponent and 1/N.
ComplexArray naive_dft(const ComplexArray& x, bool inverse = false);

/// Double-loop linear convolution.
std::vector<double> naive_convolve(std::span<const double> a, std::span<const double> b);

/// V[b,:,j] = M Q[b,:,j] for a T x T matrix M, by triple loop.
Tensor dense_matvec(const Tensor& matrix, const Tensor& q);

/// Kernel gradients of sum(V * dv) by direct double loop over (m, n).
/// dc[k] sums over m - n = k, dr[k] over n - m = k; dr[0] is set to dc[0].
void dense_kernel_grads(const Tensor& dv, const Tensor& q, std::vector<double>& dc,
                        std::vector<double>& dr);

/// Central differences of `objective` with respect to every entry of
/// `values`, which is perturbed in place and restored.
std::vector<double> numeric_gradient(std::span<double> values,
                                     const std::function<double()>& objective,
                                     double step = 1e-5);

/// ||a - b|| / max(||a||, ||b||, floor); the plain difference norm when all three vanish.
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 0.0);

/// Denominator floor for finite-difference comparisons. Structurally zero
/// gradients (both sides at roundoff) are then judged on absolute difference.
constexpr double kGradientNormFloor = 1e-4;

}  // namespace totm::oracle
