#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "totm/eval.hpp"
#include "totm/losses.hpp"
#include "totm/model.hpp"
#include "totm/optim.hpp"
#include "totm/synth.hpp"

namespace totm {

struct TrainConfig {
  OptimizerConfig optim;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  LossConfig loss;
  std::size_t n_train_clips = 64;
  std::size_t n_val_clips = 16;

  void validate(double fs) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_total = 0.0;  // mean training-mode loss over the epoch's batches
  double loss_mse = 0.0;
  double loss_rho = 0.0;
  double loss_spec = 0.0;
  double val_loss = 0.0;
  double val_mae_bpm = 0.0;
};

struct TrainResult {
  ParamMap initial;
  ParamMap final_params;
  ParamMap best;  // lowest validation HR MAE, earliest epoch on ties
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
  double initial_train_loss = 0.0;  // eval-mode combined loss over the training set
  double final_train_loss = 0.0;
};

/// Eval-mode waveform predictions for every clip, B x T, in clip order.
Tensor predict(const ParamMap& params, const ModelConfig& cfg, const std::vector<SynthClip>& clips,
               std::size_t batch_size = 16);

struct DatasetScore {
  CombinedLoss loss;                 // gradient left empty
  std::vector<double> hr_pred_bpm;
  std::vector<double> hr_ref_bpm;
  std::vector<double> snr_db;        // clips whose reference rate admits SNR
  Tensor waveforms;
  Metrics metrics;
};

DatasetScore score_dataset(const ParamMap& params, const ModelConfig& cfg,
                           const std::vector<SynthClip>& clips, const LossConfig& loss, double fs,
                           Band hr_band, const SnrConfig& snr);

/// Adam training against the combined loss. Throws DivergenceError on a
/// non-finite loss. Deterministic for a given seed.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const std::vector<SynthClip>& train_set, const std::vector<SynthClip>& val_set,
                  double fs, Band hr_band = {}, const SnrConfig& snr = {});

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochLog& e);

}  // namespace totm
