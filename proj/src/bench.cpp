#include "totm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "totm/error.hpp"
#include "totm/rng.hpp"
#include "totm/toeplitz.hpp"

namespace totm {

const char* to_string(MixMethod m) noexcept { return m == MixMethod::fft ? "fft" : "dense"; }

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidLength("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<BenchRecord> run_bench(const std::vector<std::size_t>& t_values, std::size_t d,
                                   std::size_t B, std::size_t reps, const BenchOptions& opts) {
  if (reps < 5) throw ConfigError("run_bench: need at least 5 repetitions");
  if (opts.warmup < 2) throw ConfigError("run_bench: need at least 2 warmup repetitions");
  if (t_values.empty() || !std::is_sorted(t_values.begin(), t_values.end())) {
    throw ConfigError("run_bench: T values must be non-empty and ascending");
  }
  using Clock = std::chrono::steady_clock;
  struct Point {
    Tensor q;
    ToeplitzKernel kernel;
    std::vector<double> times[2];
  };
  std::vector<Point> points;
  for (const std::size_t T : t_values) {
    Rng rng(derive_seed({opts.seed, T}));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor q({B, T, d});
    for (auto& v : q.storage()) v = normal(rng);
    std::vector<double> c(T), r(T);
    for (std::size_t k = 0; k < T; ++k) {
      c[k] = normal(rng) / std::sqrt(static_cast<double>(T));
      r[k] = normal(rng) / std::sqrt(static_cast<double>(T));
    }
    ToeplitzKernel kernel(c, r);
    const double err = max_abs_diff(toeplitz_mix(q, kernel, opts.threads), toeplitz_mix_dense(q, kernel));
    if (!(err <= opts.tolerance)) {
      throw BenchMismatch("fft and dense Toeplitz outputs differ by " + std::to_string(err) +
                          " at T=" + std::to_string(T));
    }
    points.push_back({std::move(q), std::move(kernel), {}});
  }

  constexpr MixMethod kMethods[2] = {MixMethod::fft, MixMethod::dense};
  volatile double sink = 0.0;
  // Repetitions are interleaved across sizes and methods so that bursts of
  // machine noise spread over every median instead of landing on one.
  for (std::size_t i = 0; i < opts.warmup + reps; ++i) {
    for (auto& pt : points) {
      for (int m = 0; m < 2; ++m) {
        const auto start = Clock::now();
        const Tensor out = kMethods[m] == MixMethod::fft ? toeplitz_mix(pt.q, pt.kernel, opts.threads)
                                                         : toeplitz_mix_dense(pt.q, pt.kernel);
        const auto stop = Clock::now();
        sink = sink + out[0];
        if (i >= opts.warmup) {
          pt.times[m].push_back(static_cast<double>(
              std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start).count()));
        }
      }
    }
  }
  std::vector<BenchRecord> records;
  for (std::size_t k = 0; k < points.size(); ++k) {
    for (int m = 0; m < 2; ++m) {
      records.push_back({t_values[k], d, B, kMethods[m], std::max(1.0, median(points[k].times[m])), reps});
    }
  }
  return records;
}

double loglog_slope(const std::vector<BenchRecord>& records, MixMethod method) {
  std::vector<double> xs, ys;
  for (const auto& r : records) {
    if (r.method != method) continue;
    xs.push_back(std::log(static_cast<double>(r.T)));
    ys.push_back(std::log(r.median_ns));
  }
  if (xs.size() < 2) throw InvalidLength("loglog_slope: need at least two sizes");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

std::string bench_csv_header() { return "T,d,B,method,median_ns,reps"; }

void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os << bench_csv_header() << '\n';
  for (const auto& r : records) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%s,%.0f,%zu", r.T, r.d, r.B, to_string(r.method),
                  r.median_ns, r.reps);
    os << buf << '\n';
  }
}

}  // namespace totm
