#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "totm/tensor.hpp"

namespace totm {

/// T x T Toeplitz operator A[m][n] = tau_{m-n}, stored as its first column
/// c (tau_0 .. tau_{T-1}) and first row r (tau_0, tau_{-1} .. tau_{-(T-1)}).
/// r[0] mirrors c[0]; with a lag cap set, every lag beyond it is held at 0.
class ToeplitzKernel {
 public:
  ToeplitzKernel(std::vector<double> column, std::vector<double> row,
                 std::optional<std::size_t> max_lag = std::nullopt);

  static ToeplitzKernel identity(std::size_t length);

  /// From the 2T-1 lag values ordered tau_{-(T-1)} .. tau_{T-1}.
  static ToeplitzKernel from_lags(std::span<const double> lags,
                                  std::optional<std::size_t> max_lag = std::nullopt);

  std::vector<double> lags() const;

  std::size_t length() const noexcept { return column_.size(); }
  std::size_t degrees_of_freedom() const noexcept { return 2 * column_.size() - 1; }
  const std::vector<double>& column() const noexcept { return column_; }
  const std::vector<double>& row() const noexcept { return row_; }
  std::optional<std::size_t> max_lag() const noexcept { return max_lag_; }

  /// tau_k for k in (-(T-1), T-1).
  double lag(std::ptrdiff_t k) const noexcept {
    return k >= 0 ? column_[static_cast<std::size_t>(k)] : row_[static_cast<std::size_t>(-k)];
  }

  /// The operator A^T: column and row swapped.
  ToeplitzKernel transposed() const;

  /// Replace the column/row values and re-apply the tie and truncation.
  void assign(std::vector<double> column, std::vector<double> row);

 private:
  void enforce_structure();

  std::vector<double> column_;
  std::vector<double> row_;
  std::optional<std::size_t> max_lag_;
};

/// Materialized T x T matrix; test and inspection use only.
Tensor build_dense(const ToeplitzKernel& kernel);

/// Circulant embedding of the kernel at length padded_len >= 2T-1: c at the
/// head, r[T-1] .. r[1] at the tail, zeros in between.
std::vector<double> embed_kernel(const ToeplitzKernel& kernel, std::size_t padded_len);

/// V[b,:,j] = A Q[b,:,j] for every batch element and channel, through the
/// FFT circulant embedding. Traces are split across `threads` OpenMP
/// threads (0 = runtime default); results do not depend on the count.
Tensor toeplitz_mix(const Tensor& q, const ToeplitzKernel& kernel, int threads = 0);

/// Same product by direct O(T^2) summation, serial. Reference path for tests
/// and the benchmark baseline.
Tensor toeplitz_mix_dense(const Tensor& q, const ToeplitzKernel& kernel);

struct ToeplitzGrads {
  Tensor dq;
  std::vector<double> dc;  // dc[0] carries the shared tau_0 gradient
  std::vector<double> dr;  // dr[0] == dc[0]
};

/// Adjoint of toeplitz_mix given the upstream gradient and the forward input.
/// Kernel gradients are reduced in a fixed trace order.
ToeplitzGrads toeplitz_mix_backward(const Tensor& dv, const Tensor& q_cached,
                                    const ToeplitzKernel& kernel, int threads = 0);

/// Maps (dc, dr) onto the lag layout of ToeplitzKernel::lags(), counting the
/// shared tau_0 once.
std::vector<double> lag_gradient(std::span<const double> dc, std::span<const double> dr);

}  // namespace totm
