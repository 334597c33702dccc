#include "totm/config.hpp"

#include <fstream>
#include <set>
#include <string>

namespace totm {

namespace {

using nlohmann::json;

// Reads fields of one JSON object, remembering which keys were consumed so
// leftovers can be reported.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~ObjectReader() = default;

  template <typename T>
  void read(const char* key, T& out) {
    const auto it = obj_.find(key);
    seen_.insert(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    const auto it = obj_.find(key);
    seen_.insert(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T v{};
    read(key, v);
    out = v;
  }

  /// Nested object, or null when absent.
  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void read_band(const char* key, Band& band) {
    std::vector<double> v{band.lo_hz, band.hi_hz};
    read(key, v);
    if (v.size() != 2) throw ConfigError(path(key) + ": expected [lo, hi]");
    band = {v[0], v[1]};
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key) + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

LossConfig parse_loss(const json& doc, const std::string& where) {
  LossConfig c;
  ObjectReader r(doc, where);
  r.read("lambda_mse", c.lambda_mse);
  r.read("lambda_rho", c.lambda_rho);
  r.read("lambda_spec", c.lambda_spec);
  r.read("eps", c.eps);
  if (const json* s = r.child("stft")) {
    ObjectReader sr(*s, where + ".stft");
    sr.read("window_len", c.stft.window_len);
    sr.read("hop", c.stft.hop);
    std::string window = "hann";
    sr.read("window", window);
    if (window != "hann") throw ConfigError(where + ".stft.window: only 'hann' is supported");
    Band band{c.stft.band_lo_hz, c.stft.band_hi_hz};
    sr.read_band("band_hz", band);
    c.stft.band_lo_hz = band.lo_hz;
    c.stft.band_hi_hz = band.hi_hz;
    sr.read("p", c.stft.p);
    sr.finish();
  }
  r.finish();
  return c;
}

nlohmann::ordered_json to_json(const LossConfig& c) {
  nlohmann::ordered_json j;
  j["lambda_mse"] = c.lambda_mse;
  j["lambda_rho"] = c.lambda_rho;
  j["lambda_spec"] = c.lambda_spec;
  j["eps"] = c.eps;
  j["stft"] = {{"window_len", c.stft.window_len},
               {"hop", c.stft.hop},
               {"window", "hann"},
               {"band_hz", {c.stft.band_lo_hz, c.stft.band_hi_hz}},
               {"p", c.stft.p}};
  return j;
}

TrainConfig parse_train(const json& doc) {
  TrainConfig c;
  ObjectReader r(doc, "train");
  r.read("lr", c.optim.lr);
  std::vector<double> betas{c.optim.beta1, c.optim.beta2};
  r.read("betas", betas);
  if (betas.size() != 2) throw ConfigError("train.betas: expected [beta1, beta2]");
  c.optim.beta1 = betas[0];
  c.optim.beta2 = betas[1];
  r.read("adam_eps", c.optim.eps);
  r.read("weight_decay", c.optim.weight_decay);
  r.read_optional("grad_clip", c.optim.grad_clip);
  r.read("batch_size", c.batch_size);
  r.read("epochs", c.epochs);
  r.read("seed", c.seed);
  r.read("n_train_clips", c.n_train_clips);
  r.read("n_val_clips", c.n_val_clips);
  if (const json* l = r.child("loss")) c.loss = parse_loss(*l, "train.loss");
  r.finish();
  return c;
}

SynthConfig parse_synth(const json& doc) {
  SynthConfig c;
  ObjectReader r(doc, "synth");
  r.read("fs", c.fs);
  r.read("T", c.T);
  r.read("H", c.H);
  r.read("W", c.W);
  Band hr{c.hr_lo_bpm, c.hr_hi_bpm};
  r.read_band("hr_range_bpm", hr);
  c.hr_lo_bpm = hr.lo_hz;
  c.hr_hi_bpm = hr.hi_hz;
  r.read("hr_drift", c.hr_drift);
  r.read("harmonics", c.harmonics);
  r.read("second_harmonic_amp", c.second_harmonic_amp);
  r.read("modulation_amp", c.modulation_amp);
  r.read("illum_drift_amp", c.illum_drift_amp);
  r.read("noise_sigma", c.noise_sigma);
  r.read("motion_jitter", c.motion_jitter);
  r.read("seed", c.seed);
  r.finish();
  return c;
}

EvalConfig parse_eval(const json& doc) {
  EvalConfig c;
  ObjectReader r(doc, "eval");
  r.read_band("band_hz", c.hr_band);
  r.read("n_test_clips", c.n_test_clips);
  if (const json* s = r.child("snr_windows")) {
    ObjectReader sr(*s, "eval.snr_windows");
    sr.read_band("range_hz", c.snr.range);
    sr.read("half_width_hz", c.snr.half_width_hz);
    sr.read("harmonics", c.snr.harmonics);
    sr.finish();
  }
  r.finish();
  return c;
}

}  // namespace

ModelConfig parse_model_config(const json& doc, const std::string& where) {
  ModelConfig c;
  ObjectReader r(doc, where);
  r.read("d", c.d);
  r.read("L", c.blocks);
  r.read("K", c.kernel_size);
  r.read("mlp_ratio", c.mlp_ratio);
  r.read("dropout_p", c.dropout_p);
  r.read("T", c.T);
  r.read("pool_grid", c.pool_grid);
  std::string stem = "mean_pool_linear";
  r.read("stem", stem);
  if (stem != "mean_pool_linear") throw ConfigError(where + ".stem: only 'mean_pool_linear' is supported");
  std::string variant = to_string(c.variant);
  r.read("variant", variant);
  c.variant = parse_variant(variant);
  r.read_optional("max_lag", c.max_lag);
  r.finish();
  return c;
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["d"] = c.d;
  j["L"] = c.blocks;
  j["K"] = c.kernel_size;
  j["mlp_ratio"] = c.mlp_ratio;
  j["dropout_p"] = c.dropout_p;
  j["T"] = c.T;
  j["pool_grid"] = c.pool_grid;
  j["stem"] = "mean_pool_linear";
  j["variant"] = to_string(c.variant);
  j["max_lag"] = c.max_lag ? nlohmann::ordered_json(*c.max_lag) : nlohmann::ordered_json(nullptr);
  return j;
}

void RunConfig::validate() const {
  model.validate();
  synth.validate();
  train.validate(synth.fs);
  if (model.T != synth.T) {
    throw ConfigError("model.T (" + std::to_string(model.T) + ") must equal synth.T (" +
                      std::to_string(synth.T) + ")");
  }
  if (synth.H % model.pool_grid != 0 || synth.W % model.pool_grid != 0) {
    throw ConfigError("synth frame size must be divisible by model.pool_grid");
  }
  if (eval.n_test_clips < 1) throw ConfigError("eval.n_test_clips must be >= 1");
  if (!(eval.hr_band.lo_hz > 0 && eval.hr_band.lo_hz < eval.hr_band.hi_hz &&
        eval.hr_band.hi_hz < synth.fs / 2)) {
    throw ConfigError("eval.band_hz must satisfy 0 < lo < hi < fs/2");
  }
  if (static_cast<double>(synth.T) < 2.0 * synth.fs) {
    throw ConfigError("clips must be at least 2 s long for heart-rate estimation");
  }
}

RunConfig parse_run_config(const json& doc) {
  RunConfig c;
  ObjectReader r(doc, "config");
  if (const json* m = r.child("model")) c.model = parse_model_config(*m);
  if (const json* t = r.child("train")) c.train = parse_train(*t);
  if (const json* s = r.child("synth")) c.synth = parse_synth(*s);
  if (const json* e = r.child("eval")) c.eval = parse_eval(*e);
  r.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(doc);
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = to_json(c.model);
  nlohmann::ordered_json t;
  t["lr"] = c.train.optim.lr;
  t["betas"] = {c.train.optim.beta1, c.train.optim.beta2};
  t["adam_eps"] = c.train.optim.eps;
  t["weight_decay"] = c.train.optim.weight_decay;
  t["grad_clip"] = c.train.optim.grad_clip ? nlohmann::ordered_json(*c.train.optim.grad_clip)
                                           : nlohmann::ordered_json(nullptr);
  t["batch_size"] = c.train.batch_size;
  t["epochs"] = c.train.epochs;
  t["seed"] = c.train.seed;
  t["n_train_clips"] = c.train.n_train_clips;
  t["n_val_clips"] = c.train.n_val_clips;
  t["loss"] = to_json(c.train.loss);
  j["train"] = t;
  const auto& s = c.synth;
  j["synth"] = {{"fs", s.fs},
                {"T", s.T},
                {"H", s.H},
                {"W", s.W},
                {"hr_range_bpm", {s.hr_lo_bpm, s.hr_hi_bpm}},
                {"hr_drift", s.hr_drift},
                {"harmonics", s.harmonics},
                {"second_harmonic_amp", s.second_harmonic_amp},
                {"modulation_amp", s.modulation_amp},
                {"illum_drift_amp", s.illum_drift_amp},
                {"noise_sigma", s.noise_sigma},
                {"motion_jitter", s.motion_jitter},
                {"seed", s.seed}};
  j["eval"] = {{"band_hz", {c.eval.hr_band.lo_hz, c.eval.hr_band.hi_hz}},
               {"n_test_clips", c.eval.n_test_clips},
               {"snr_windows",
                {{"range_hz", {c.eval.snr.range.lo_hz, c.eval.snr.range.hi_hz}},
                 {"half_width_hz", c.eval.snr.half_width_hz},
                 {"harmonics", c.eval.snr.harmonics}}}};
  return j;
}

}  // namespace totm
