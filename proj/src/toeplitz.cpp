#include "totm/toeplitz.hpp"

#include <algorithm>
#include <string>

#include "parallel.hpp"
#include "totm/fft.hpp"

namespace totm {

namespace {

void require_sequence(const Tensor& q, std::size_t length, const char* what) {
  if (q.rank() != 3) {
    throw DimensionError(std::string(what) + ": expected B x T x d, got " +
                         shape_to_string(q.shape()));
  }
  if (q.dim(1) != length) {
    throw DimensionError(std::string(what) + ": kernel length " + std::to_string(length) +
                         " does not match T = " + std::to_string(q.dim(1)));
  }
}

std::size_t padded_length(std::size_t T) { return next_power_of_two(2 * T - 1); }

}  // namespace

ToeplitzKernel::ToeplitzKernel(std::vector<double> column, std::vector<double> row,
                               std::optional<std::size_t> max_lag)
    : column_(std::move(column)), row_(std::move(row)), max_lag_(max_lag) {
  if (column_.empty()) throw InvalidLength("Toeplitz kernel needs T >= 1");
  if (row_.size() != column_.size()) {
    throw DimensionError("Toeplitz column length " + std::to_string(column_.size()) +
                         " differs from row length " + std::to_string(row_.size()));
  }
  enforce_structure();
}

ToeplitzKernel ToeplitzKernel::identity(std::size_t length) {
  if (length == 0) throw InvalidLength("Toeplitz kernel needs T >= 1");
  std::vector<double> c(length, 0.0);
  c[0] = 1.0;
  return ToeplitzKernel(c, c);
}

ToeplitzKernel ToeplitzKernel::from_lags(std::span<const double> lags,
                                         std::optional<std::size_t> max_lag) {
  if (lags.size() % 2 == 0) {
    throw InvalidLength("Toeplitz lag vector must have odd length 2T-1, got " +
                        std::to_string(lags.size()));
  }
  const std::size_t T = (lags.size() + 1) / 2;
  std::vector<double> c(T), r(T);
  for (std::size_t k = 0; k < T; ++k) {
    c[k] = lags[T - 1 + k];
    r[k] = lags[T - 1 - k];
  }
  return ToeplitzKernel(std::move(c), std::move(r), max_lag);
}

std::vector<double> ToeplitzKernel::lags() const {
  const std::size_t T = length();
  std::vector<double> out(2 * T - 1);
  for (std::size_t k = 0; k < T; ++k) {
    out[T - 1 + k] = column_[k];
    out[T - 1 - k] = row_[k];
  }
  return out;
}

ToeplitzKernel ToeplitzKernel::transposed() const {
  return ToeplitzKernel(row_, column_, max_lag_);
}

void ToeplitzKernel::assign(std::vector<double> column, std::vector<double> row) {
  if (column.size() != column_.size() || row.size() != row_.size()) {
    throw DimensionError("Toeplitz assign: length change not allowed");
  }
  column_ = std::move(column);
  row_ = std::move(row);
  enforce_structure();
}

void ToeplitzKernel::enforce_structure() {
  row_[0] = column_[0];
  if (max_lag_) {
    for (std::size_t k = *max_lag_ + 1; k < column_.size(); ++k) {
      column_[k] = 0.0;
      row_[k] = 0.0;
    }
  }
}

Tensor build_dense(const ToeplitzKernel& kernel) {
  const std::size_t T = kernel.length();
  Tensor a({T, T});
  for (std::size_t m = 0; m < T; ++m) {
    for (std::size_t n = 0; n < T; ++n) {
      a.at(m, n) = m >= n ? kernel.column()[m - n] : kernel.row()[n - m];
    }
  }
  return a;
}

std::vector<double> embed_kernel(const ToeplitzKernel& kernel, std::size_t padded_len) {
  const std::size_t T = kernel.length();
  if (padded_len < 2 * T - 1) {
    throw InvalidLength("embed_kernel: padded length " + std::to_string(padded_len) +
                        " below 2T-1 = " + std::to_string(2 * T - 1));
  }
  std::vector<double> out(padded_len, 0.0);
  std::copy(kernel.column().begin(), kernel.column().end(), out.begin());
  for (std::size_t k = 1; k < T; ++k) out[padded_len - k] = kernel.row()[k];
  return out;
}

Tensor toeplitz_mix(const Tensor& q, const ToeplitzKernel& kernel, int threads) {
  const std::size_t T = kernel.length();
  require_sequence(q, T, "toeplitz_mix");
  const std::size_t B = q.dim(0), d = q.dim(2);
  const std::size_t traces = B * d;

  const FftPlan plan(padded_length(T));
  const std::size_t N = plan.size();
  const auto kappa = embed_kernel(kernel, N);
  ComplexArray kernel_spectrum(kappa.begin(), kappa.end());
  plan.forward(kernel_spectrum);

  Tensor v(q.shape());
  const double* src = q.data();
  double* dst = v.data();
  // Two real traces ride in one complex transform: the kernel is real, so
  // the real and imaginary parts convolve independently.
  const auto pairs = static_cast<std::ptrdiff_t>((traces + 1) / 2);
#pragma omp parallel num_threads(detail::resolve_threads(threads))
  {
    ComplexArray buf(N);
#pragma omp for schedule(static)
    for (std::ptrdiff_t p = 0; p < pairs; ++p) {
      const std::size_t first = 2 * static_cast<std::size_t>(p);
      const bool has_second = first + 1 < traces;
      const std::size_t b0 = first / d, j0 = first % d;
      const std::size_t b1 = (first + 1) / d, j1 = (first + 1) % d;
      std::fill(buf.begin(), buf.end(), Complex{});
      for (std::size_t t = 0; t < T; ++t) {
        const double im = has_second ? src[(b1 * T + t) * d + j1] : 0.0;
        buf[t] = Complex(src[(b0 * T + t) * d + j0], im);
      }
      plan.forward(buf);
      for (std::size_t k = 0; k < N; ++k) buf[k] *= kernel_spectrum[k];
      plan.inverse(buf);
      for (std::size_t t = 0; t < T; ++t) {
        dst[(b0 * T + t) * d + j0] = buf[t].real();
        if (has_second) dst[(b1 * T + t) * d + j1] = buf[t].imag();
      }
    }
  }
  return v;
}

Tensor toeplitz_mix_dense(const Tensor& q, const ToeplitzKernel& kernel) {
  const std::size_t T = kernel.length();
  require_sequence(q, T, "toeplitz_mix_dense");
  const std::size_t B = q.dim(0), d = q.dim(2);
  Tensor v(q.shape());
  for (std::size_t b = 0; b < B; ++b) {
    const double* qb = q.data() + b * T * d;
    double* vb = v.data() + b * T * d;
    for (std::size_t m = 0; m < T; ++m) {
      double* out = vb + m * d;
      for (std::size_t n = 0; n < T; ++n) {
        const double a = kernel.lag(static_cast<std::ptrdiff_t>(m) - static_cast<std::ptrdiff_t>(n));
        const double* in = qb + n * d;
        for (std::size_t j = 0; j < d; ++j) out[j] += a * in[j];
      }
    }
  }
  return v;
}

ToeplitzGrads toeplitz_mix_backward(const Tensor& dv, const Tensor& q_cached,
                                    const ToeplitzKernel& kernel, int threads) {
  const std::size_t T = kernel.length();
  require_sequence(q_cached, T, "toeplitz_mix_backward");
  require_shape(dv, q_cached.shape(), "toeplitz_mix_backward upstream");
  const std::size_t B = q_cached.dim(0), d = q_cached.dim(2);
  const std::size_t traces = B * d;

  ToeplitzGrads g;
  g.dq = toeplitz_mix(dv, kernel.transposed(), threads);

  // Per trace: full[s] = sum_n dv[n + s - (T-1)] q[n], the cross-correlation
  // of dv against q, obtained as conv(dv, reverse(q)).
  const FftPlan plan(padded_length(T));
  const std::size_t N = plan.size();
  const std::size_t full_len = 2 * T - 1;
  std::vector<double> partial(traces * full_len);
  const double* up = dv.data();
  const double* in = q_cached.data();
#pragma omp parallel num_threads(detail::resolve_threads(threads))
  {
    ComplexArray buf(N);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(traces); ++i) {
      const std::size_t idx = static_cast<std::size_t>(i);
      const std::size_t b = idx / d, j = idx % d;
      std::fill(buf.begin(), buf.end(), Complex{});
      for (std::size_t t = 0; t < T; ++t) {
        buf[t] = Complex(up[(b * T + t) * d + j], in[(b * T + (T - 1 - t)) * d + j]);
      }
      plan.forward(buf);
      // Split the packed spectrum Z = F(x) + i F(y) of two real signals and
      // multiply F(x) F(y) = (Z[k]^2 - conj(Z[-k])^2) / (4i).
      ComplexArray prod(N);
      for (std::size_t k = 0; k < N; ++k) {
        const Complex z = buf[k];
        const Complex zc = std::conj(buf[(N - k) % N]);
        prod[k] = (z * z - zc * zc) / Complex(0.0, 4.0);
      }
      plan.inverse(prod);
      double* out = partial.data() + idx * full_len;
      for (std::size_t s = 0; s < full_len; ++s) out[s] = prod[s].real();
    }
  }

  std::vector<double> full(full_len, 0.0);
  for (std::size_t idx = 0; idx < traces; ++idx) {
    const double* p = partial.data() + idx * full_len;
    for (std::size_t s = 0; s < full_len; ++s) full[s] += p[s];
  }

  g.dc.assign(T, 0.0);
  g.dr.assign(T, 0.0);
  for (std::size_t k = 0; k < T; ++k) {
    g.dc[k] = full[T - 1 + k];
    g.dr[k] = full[T - 1 - k];
  }
  g.dr[0] = g.dc[0];
  if (const auto cap = kernel.max_lag()) {
    for (std::size_t k = *cap + 1; k < T; ++k) {
      g.dc[k] = 0.0;
      g.dr[k] = 0.0;
    }
  }
  return g;
}

std::vector<double> lag_gradient(std::span<const double> dc, std::span<const double> dr) {
  if (dc.size() != dr.size() || dc.empty()) {
    throw DimensionError("lag_gradient: mismatched kernel gradient lengths");
  }
  const std::size_t T = dc.size();
  std::vector<double> out(2 * T - 1);
  for (std::size_t k = 0; k < T; ++k) out[T - 1 + k] = dc[k];
  for (std::size_t k = 1; k < T; ++k) out[T - 1 - k] = dr[k];
  return out;
}

}  // namespace totm
