#include "totm/checkpoint.hpp"

#include <fstream>

#include "totm/config.hpp"

namespace totm {

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ParamMap& params) {
  nlohmann::ordered_json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["config"] = to_json(cfg);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  for (const auto& [name, t] : params) {
    tensors[name] = {{"shape", t.shape()}, {"values", t.storage()}};
  }
  doc["tensors"] = std::move(tensors);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os << doc.dump() << '\n';
  if (!os) throw std::runtime_error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointMismatch("", "checkpoint is not valid JSON: " + std::string(e.what()));
  }
  const auto version = doc.value("format_version", -1);
  if (version != kCheckpointFormatVersion) {
    throw CheckpointMismatch("format_version",
                             "unsupported checkpoint format_version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config = parse_model_config(doc.at("config"), "checkpoint.config");
  for (const auto& [name, entry] : doc.at("tensors").items()) {
    try {
      ck.params.emplace(name, Tensor(entry.at("shape").get<Shape>(),
                                     entry.at("values").get<std::vector<double>>()));
    } catch (const std::exception& e) {
      throw CheckpointMismatch(name, "bad tensor '" + name + "': " + e.what());
    }
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  validate_params(ck.params, expected);
  ck.config = expected;
  return ck;
}

}  // namespace totm
