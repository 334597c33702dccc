#include "totm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace totm {

namespace {

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

void TrainConfig::validate(double fs) const {
  optim.validate();
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (n_train_clips < 1 || n_val_clips < 1) throw ConfigError("train clip counts must be >= 1");
  loss.validate(fs);
}

Tensor predict(const ParamMap& params, const ModelConfig& cfg, const std::vector<SynthClip>& clips,
               std::size_t batch_size) {
  if (clips.empty()) throw DimensionError("predict: no clips");
  const std::size_t T = cfg.T;
  Tensor out({clips.size(), T});
  const auto order = iota_n(clips.size());
  for (std::size_t start = 0; start < clips.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, clips.size() - start);
    const std::span<const std::size_t> sel(order.data() + start, count);
    const Tensor pred = model_forward(stack_frames(clips, sel), params, cfg, false, nullptr);
    std::copy(pred.storage().begin(), pred.storage().end(),
              out.storage().begin() + static_cast<std::ptrdiff_t>(start * T));
  }
  return out;
}

DatasetScore score_dataset(const ParamMap& params, const ModelConfig& cfg,
                           const std::vector<SynthClip>& clips, const LossConfig& loss, double fs,
                           Band hr_band, const SnrConfig& snr) {
  DatasetScore s;
  s.waveforms = predict(params, cfg, clips);
  const auto all = iota_n(clips.size());
  s.loss = combined_loss(s.waveforms, stack_bvp(clips, all), loss, fs);
  s.loss.grad = Tensor();
  const std::size_t T = cfg.T;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::span<const double> wave(s.waveforms.data() + i * T, T);
    s.hr_pred_bpm.push_back(estimate_hr_fft(wave, fs, hr_band));
    s.hr_ref_bpm.push_back(clips[i].hr_bpm);
    if (snr_defined(clips[i].hr_bpm, snr)) s.snr_db.push_back(snr_db(wave, clips[i].hr_bpm, fs, snr));
  }
  s.metrics = compute_metrics(s.hr_pred_bpm, s.hr_ref_bpm, s.snr_db);
  return s;
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<SynthClip>& train_set, const std::vector<SynthClip>& val_set,
                  double fs, Band hr_band, const SnrConfig& snr) {
  model_cfg.validate();
  train_cfg.validate(fs);
  if (train_set.empty() || val_set.empty()) throw ConfigError("train: empty dataset");

  TrainResult result;
  ParamMap params = init_params(model_cfg, derive_seed({train_cfg.seed, 0x1417}));
  result.initial = params;
  result.best = params;
  result.initial_train_loss =
      score_dataset(params, model_cfg, train_set, train_cfg.loss, fs, hr_band, snr).loss.total;

  Rng shuffle_rng(derive_seed({train_cfg.seed, 0x5eed}));
  Rng dropout_rng(derive_seed({train_cfg.seed, 0xd40f}));
  AdamState adam;
  std::size_t step = 0;
  double best_mae = std::numeric_limits<double>::infinity();
  auto order = iota_n(train_set.size());

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      const std::size_t count = std::min(train_cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> sel(order.data() + start, count);
      const Tensor x = stack_frames(train_set, sel);
      const Tensor ref = stack_bvp(train_set, sel);
      ModelCache cache;
      const Tensor pred = model_forward(x, params, model_cfg, true, &dropout_rng, &cache);
      const CombinedLoss loss = combined_loss(pred, ref, train_cfg.loss, fs);
      if (!std::isfinite(loss.total)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step + 1));
      }
      const ParamMap grads = model_backward(loss.grad, cache, params, model_cfg);
      adam_step(params, grads, adam, train_cfg.optim, ++step);
      enforce_structure(params, model_cfg);

      const double w = static_cast<double>(count) / static_cast<double>(order.size());
      log.loss_total += w * loss.total;
      log.loss_mse += w * loss.mse;
      log.loss_rho += w * loss.rho;
      log.loss_spec += w * loss.spec;
    }
    const auto val = score_dataset(params, model_cfg, val_set, train_cfg.loss, fs, hr_band, snr);
    log.val_loss = val.loss.total;
    log.val_mae_bpm = val.metrics.mae_bpm;
    if (!std::isfinite(log.val_loss)) {
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    if (log.val_mae_bpm < best_mae) {
      best_mae = log.val_mae_bpm;
      result.best = params;
      result.best_epoch = epoch;
    }
    result.log.push_back(log);
  }
  result.final_params = params;
  result.final_train_loss =
      train_cfg.epochs == 0
          ? result.initial_train_loss
          : score_dataset(params, model_cfg, train_set, train_cfg.loss, fs, hr_band, snr).loss.total;
  return result;
}

std::string epoch_csv_header() {
  return "epoch,loss_total,loss_mse,loss_rho,loss_spec,val_loss,val_mae_bpm";
}

std::string epoch_csv_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", e.epoch, e.loss_total,
                e.loss_mse, e.loss_rho, e.loss_spec, e.val_loss, e.val_mae_bpm);
  return buf;
}

}  // namespace totm
