#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace totm {

enum class MixMethod { fft, dense };

const char* to_string(MixMethod m) noexcept;

struct BenchRecord {
  std::size_t T = 0;
  std::size_t d = 0;
  std::size_t B = 0;
  MixMethod method = MixMethod::fft;
  double median_ns = 0.0;
  std::size_t reps = 0;
};

struct BenchOptions {
  std::size_t warmup = 2;
  std::uint64_t seed = 7;
  int threads = 1;  // FFT path thread count; timings are meant single-threaded
  double tolerance = 1e-8;
};

/// FFT and dense paths disagreed; nothing is recorded for that T.
class BenchMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Times toeplitz_mix (fft) and toeplitz_mix_dense (dense) on the same random
/// inputs for each T, median of `reps` runs after warmup. The two outputs are
/// compared before any timing is recorded.
std::vector<BenchRecord> run_bench(const std::vector<std::size_t>& t_values, std::size_t d,
                                   std::size_t B, std::size_t reps, const BenchOptions& opts = {});

double median(std::vector<double> values);

/// Least-squares slope of log(median_ns) against log(T) for one method.
double loglog_slope(const std::vector<BenchRecord>& records, MixMethod method);

std::string bench_csv_header();
void write_bench_csv(std::ostream& os, const std::vector<BenchRecord>& records);

}  // namespace totm
