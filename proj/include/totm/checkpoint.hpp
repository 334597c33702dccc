#pragma once

#include <filesystem>

#include "totm/model.hpp"

namespace totm {

constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParamMap params;
};

/// JSON document {format_version, config, tensors: {path: {shape, values}}}.
/// Values round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ParamMap& params);

/// Parses a checkpoint. Throws CheckpointMismatch on an unknown
/// format_version or a tensor whose value count disagrees with its shape.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads and checks every tensor against the layout `expected` implies.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace totm
