#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "totm/bench.hpp"
#include "totm/check.hpp"
#include "totm/checkpoint.hpp"
#include "totm/config.hpp"
#include "totm/error.hpp"
#include "totm/synth.hpp"
#include "totm/threads.hpp"
#include "totm/train.hpp"

namespace fs = std::filesystem;
using namespace totm;

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kUsage = 2, kDiverged = 3, kMismatch = 4 };

RunConfig load_or_default(const std::string& path) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

int cmd_synth(const std::string& config, const fs::path& out, std::size_t n, const std::string& domain,
              const std::string& split) {
  const RunConfig cfg = load_or_default(config);
  const Domain dom = parse_domain(domain);
  const Split sp = parse_split(split);
  ensure_dir(out);
  for (std::size_t i = 0; i < n; ++i) {
    export_clip(out, i, make_clip(cfg.synth, sp, dom, i), cfg.synth, sp, dom);
  }
  std::printf("wrote %zu clips (%s, domain %s) to %s\n", n, to_string(sp), to_string(dom),
              out.string().c_str());
  return kOk;
}

int cmd_train(const std::string& config, const fs::path& out, const std::string& variant) {
  RunConfig cfg = load_or_default(config);
  if (!variant.empty()) cfg.model.variant = parse_variant(variant);
  cfg.validate();
  ensure_dir(out);
  write_text(out / "resolved_config.json", to_json(cfg).dump(2) + "\n");

  const auto train_set = make_dataset(cfg.synth, cfg.train.n_train_clips, Split::train, Domain::A);
  const auto val_set = make_dataset(cfg.synth, cfg.train.n_val_clips, Split::val, Domain::A);
  const TrainResult result =
      train(cfg.model, cfg.train, train_set, val_set, cfg.synth.fs, cfg.eval.hr_band, cfg.eval.snr);

  save_checkpoint(out / "checkpoint.json", cfg.model, result.best);
  std::string csv = epoch_csv_header() + "\n";
  for (const auto& e : result.log) csv += epoch_csv_row(e) + "\n";
  write_text(out / "epochs.csv", csv);

  std::printf("variant %s: %zu parameters, train loss %.6g -> %.6g over %zu epochs\n",
              to_string(cfg.model.variant), count_elements(result.final_params),
              result.initial_train_loss, result.final_train_loss, result.log.size());
  if (result.best_epoch > 0) {
    std::printf("final val MAE %.4f bpm (best %.4f at epoch %zu)\n", result.log.back().val_mae_bpm,
                result.log[result.best_epoch - 1].val_mae_bpm, result.best_epoch);
  }
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const std::string& config, const std::string& domain,
             const fs::path& out) {
  const RunConfig cfg = load_or_default(config);
  const Domain dom = parse_domain(domain);
  const Checkpoint ckpt = load_checkpoint(checkpoint, cfg.model);
  const auto test_set = make_dataset(cfg.synth, cfg.eval.n_test_clips, Split::test, dom);
  const DatasetScore score = score_dataset(ckpt.params, cfg.model, test_set, cfg.train.loss,
                                           cfg.synth.fs, cfg.eval.hr_band, cfg.eval.snr);
  write_text(out, metrics_csv_header() + "\n" + metrics_csv_row("test", to_string(dom), score.metrics) + "\n");
  std::printf("domain %s: MAE %.4f bpm, RMSE %.4f bpm over %zu clips\n", to_string(dom),
              score.metrics.mae_bpm, score.metrics.rmse_bpm, score.metrics.n_clips);
  return kOk;
}

int cmd_check(const std::string& fault) {
  check::CheckOptions opts;
  if (fault == "toeplitz-adjoint") {
    opts.corrupt_toeplitz_adjoint = true;
  } else if (!fault.empty()) {
    std::fprintf(stderr, "unknown fault '%s'\n", fault.c_str());
    return kUsage;
  }
  const auto results = check::run_checks(opts);
  std::string failed;
  for (const auto& r : results) {
    std::printf("%s %-20s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    if (!r.passed) failed += (failed.empty() ? "" : ", ") + r.name;
  }
  std::printf("%zu suites\n", results.size());
  if (!failed.empty()) {
    std::fprintf(stderr, "check failed: %s\n", failed.c_str());
    return kCheckFailed;
  }
  return kOk;
}

int cmd_bench(std::size_t t_min, std::size_t t_max, const fs::path& csv, std::size_t d, std::size_t B,
              std::size_t reps, int threads) {
  if (t_min < 2 || t_min > t_max) {
    std::fprintf(stderr, "invalid range: need 2 <= t-min <= t-max\n");
    return kUsage;
  }
  std::vector<std::size_t> t_values;
  for (std::size_t t = 2; t <= t_max; t *= 2) {
    if (t >= t_min) t_values.push_back(t);
  }
  if (t_values.empty()) {
    std::fprintf(stderr, "invalid range: no power of two in [%zu, %zu]\n", t_min, t_max);
    return kUsage;
  }
  BenchOptions opts;
  opts.threads = threads;
  const auto records = run_bench(t_values, d, B, reps, opts);
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  write_bench_csv(out, records);
  if (t_values.size() >= 2) {
    std::fprintf(stderr, "log-log slope: fft %.3f, dense %.3f\n", loglog_slope(records, MixMethod::fft),
                 loglog_slope(records, MixMethod::dense));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toeplitz temporal mixing network for pulse-waveform regression"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "OpenMP threads for parallel kernels")->check(CLI::Range(1, 1024));

  std::string config, domain = "A", split = "train", variant, fault;
  std::string out_path, checkpoint, csv;
  std::size_t n = 1, t_min = 0, t_max = 0, bench_d = 32, bench_b = 4, reps = 5;

  auto* synth = app.add_subcommand("synth", "write synthetic clips");
  synth->add_option("--config", config)->check(CLI::ExistingFile);
  synth->add_option("--out", out_path)->required();
  synth->add_option("--n", n)->check(CLI::PositiveNumber);
  synth->add_option("--domain", domain)->check(CLI::IsMember({"A", "B"}));
  synth->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));

  auto* trn = app.add_subcommand("train", "generate data and train a model");
  trn->add_option("--config", config)->check(CLI::ExistingFile);
  trn->add_option("--out", out_path)->required();
  trn->add_option("--variant", variant)->check(CLI::IsMember({"full", "local_only", "no_gate"}));

  auto* evl = app.add_subcommand("eval", "score a checkpoint on a test split");
  evl->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  evl->add_option("--config", config)->check(CLI::ExistingFile);
  evl->add_option("--domain", domain)->check(CLI::IsMember({"A", "B"}));
  evl->add_option("--out", out_path)->required();

  auto* chk = app.add_subcommand("check", "run oracle comparison suites");
  chk->add_option("--inject-fault", fault, "test hook: toeplitz-adjoint");

  auto* bch = app.add_subcommand("bench", "time FFT and dense Toeplitz mixing");
  bch->add_option("--t-min", t_min)->required();
  bch->add_option("--t-max", t_max)->required();
  bch->add_option("--csv", csv)->required();
  bch->add_option("--d", bench_d)->check(CLI::PositiveNumber);
  bch->add_option("--B", bench_b)->check(CLI::PositiveNumber);
  bch->add_option("--reps", reps);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  set_thread_count(threads);

  try {
    if (*synth) return cmd_synth(config, out_path, n, domain, split);
    if (*trn) return cmd_train(config, out_path, variant);
    if (*evl) return cmd_eval(checkpoint, config, domain, out_path);
    if (*chk) return cmd_check(fault);
    if (*bch) return cmd_bench(t_min, t_max, csv, bench_d, bench_b, reps, threads);
  } catch (const CheckpointMismatch& e) {
    std::fprintf(stderr, "checkpoint mismatch at '%s': %s\n", e.path().c_str(), e.what());
    return kMismatch;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kDiverged;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
