#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "totm/model.hpp"
#include "totm/rng.hpp"

// Oracle comparisons shared by the `check` command and the acceptance
// suite: fast paths against brute force, analytic gradients against
// central differences.

namespace totm::check {

struct GradReport {
  std::string name;
  double rel_error = 0.0;
};

double worst(const std::vector<GradReport>& reports);

/// Max-abs gap between toeplitz_mix and build_dense + dense matvec for one
/// random kernel and input.
double toeplitz_dense_gap(std::size_t T, std::size_t B, std::size_t d, Rng& rng);

/// FFT round trip, Parseval and convolution errors for one random case.
struct FftCaseErrors {
  double roundtrip = 0.0;          // max-abs
  double parseval = 0.0;           // relative
  double convolution = 0.0;        // max-abs vs naive
  double dft_vs_naive = 0.0;       // max-abs, only for n <= 256
};
FftCaseErrors fft_case(std::size_t n, std::size_t conv_m, std::size_t conv_n, Rng& rng);

std::vector<GradReport> layer_gradients(Rng& rng);
/// corrupt=true perturbs the analytic input gradient, for fault injection.
std::vector<GradReport> toeplitz_gradients(Rng& rng, bool corrupt = false);
std::vector<GradReport> loss_gradients(Rng& rng);
/// Every parameter of a randomized model, objective sum(pred * R).
std::vector<GradReport> model_gradients(const ModelConfig& cfg, std::size_t frame_size, Rng& rng);
/// One mixer block, every block parameter and the input.
std::vector<GradReport> block_gradients(const ModelConfig& cfg, std::size_t batch, Rng& rng);

/// Random configuration with its formula and enumerated counts.
struct CountCase {
  ModelConfig cfg;
  std::size_t formula = 0;
  std::size_t enumerated = 0;
};
CountCase param_count_case(Rng& rng);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 20240601;
  bool corrupt_toeplitz_adjoint = false;
};

std::vector<SuiteResult> run_checks(const CheckOptions& opts = {});

}  // namespace totm::check
