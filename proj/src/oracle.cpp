#include "totm/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace totm::oracle {

ComplexArray naive_dft(const ComplexArray& x, bool inverse) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;
  ComplexArray out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{};
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays small and exact.
      const double angle = sign * 2.0 * std::numbers::pi *
                           static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

std::vector<double> naive_convolve(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Tensor dense_matvec(const Tensor& matrix, const Tensor& q) {
  const std::size_t B = q.dim(0), T = q.dim(1), d = q.dim(2);
  require_shape(matrix, {T, T}, "dense_matvec");
  Tensor v(q.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t m = 0; m < T; ++m) {
        double acc = 0.0;
        for (std::size_t n = 0; n < T; ++n) acc += matrix.at(m, n) * q.at(b, n, j);
        v.at(b, m, j) = acc;
      }
  return v;
}

void dense_kernel_grads(const Tensor& dv, const Tensor& q, std::vector<double>& dc,
                        std::vector<double>& dr) {
  const std::size_t B = q.dim(0), T = q.dim(1), d = q.dim(2);
  dc.assign(T, 0.0);
  dr.assign(T, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t m = 0; m < T; ++m)
        for (std::size_t n = 0; n < T; ++n) {
          const double g = dv.at(b, m, j) * q.at(b, n, j);
          if (m >= n) dc[m - n] += g;
          else dr[n - m] += g;
        }
  dr[0] = dc[0];
}

std::vector<double> numeric_gradient(std::span<double> values,
                                     const std::function<double()>& objective, double step) {
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = objective();
    values[i] = saved - step;
    const double down = objective();
    values[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(std::max(na, nb)), floor);
  if (scale == 0.0) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

}  // namespace totm::oracle
