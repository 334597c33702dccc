#pragma once

#include <filesystem>

#include <json.hpp>

#include "totm/eval.hpp"
#include "totm/model.hpp"
#include "totm/synth.hpp"
#include "totm/train.hpp"

namespace totm {

struct EvalConfig {
  Band hr_band;
  SnrConfig snr;
  std::size_t n_test_clips = 32;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

/// Everything one pipeline run needs. Every field is optional in the JSON
/// document; unknown keys are rejected with their full path.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  EvalConfig eval;

  /// Field checks plus cross-section consistency (clip length, frame size).
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const RunConfig& cfg);

ModelConfig parse_model_config(const nlohmann::json& doc, const std::string& where = "model");
nlohmann::ordered_json to_json(const ModelConfig& cfg);

}  // namespace totm
