#include "vqtt/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

namespace vqtt {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& prefix) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + (prefix.empty() ? key : prefix + "." + key) +
                        "'");
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ProjectConfig ProjectConfig::defaults(const std::string& preset) {
  ProjectConfig cfg;
  cfg.preset = preset;
  cfg.spectral = train::spectral_config_for_preset(preset);
  cfg.model = train::model_config_for_preset(preset);
  cfg.train.preset = preset;
  return cfg;
}

ProjectConfig ProjectConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_text(text, path.string());
}

ProjectConfig ProjectConfig::from_json_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config " + origin + " is not valid JSON: " + e.what());
  }
  reject_unknown_keys(j, {"preset", "spectral", "model", "train", "data", "eval"}, "");

  const std::string preset = j.value("preset", std::string("toy"));
  ProjectConfig cfg = defaults(preset);

  if (j.contains("spectral")) {
    const auto& js = j.at("spectral");
    reject_unknown_keys(js, {"sample_rate", "fft_size", "hop_seconds"}, "spectral");
    read_field(js, "sample_rate", cfg.spectral.sample_rate);
    read_field(js, "fft_size", cfg.spectral.fft_size);
    read_field(js, "hop_seconds", cfg.spectral.hop_seconds);
  }
  if (j.contains("model")) {
    const auto& jm = j.at("model");
    reject_unknown_keys(jm,
                        {"channels", "freq_bins", "codebook_size", "downsample_factor",
                         "leaky_relu_slope", "batchnorm_eps"},
                        "model");
    read_field(jm, "channels", cfg.model.channels);
    read_field(jm, "freq_bins", cfg.model.freq_bins);
    read_field(jm, "codebook_size", cfg.model.codebook_size);
    read_field(jm, "downsample_factor", cfg.model.downsample_factor);
    read_field(jm, "leaky_relu_slope", cfg.model.leaky_relu_slope);
    read_field(jm, "batchnorm_eps", cfg.model.batchnorm_eps);
  }
  if (j.contains("train")) {
    const auto& jt = j.at("train");
    reject_unknown_keys(jt,
                        {"epochs", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                         "batch_size", "beta", "seed", "grad_clip_norm"},
                        "train");
    read_field(jt, "epochs", cfg.train.epochs);
    read_field(jt, "learning_rate", cfg.train.learning_rate);
    read_field(jt, "adam_beta1", cfg.train.adam_beta1);
    read_field(jt, "adam_beta2", cfg.train.adam_beta2);
    read_field(jt, "adam_eps", cfg.train.adam_eps);
    read_field(jt, "batch_size", cfg.train.batch_size);
    read_field(jt, "beta", cfg.train.beta);
    read_field(jt, "seed", cfg.train.seed);
    read_field(jt, "grad_clip_norm", cfg.train.grad_clip_norm);
  }
  if (j.contains("data")) {
    const auto& jd = j.at("data");
    reject_unknown_keys(jd,
                        {"pairs", "segment_seconds", "augment", "max_effects",
                         "max_resample_semitones", "max_transpose_semitones",
                         "benchmark_cross_family", "track"},
                        "data");
    read_field(jd, "pairs", cfg.data.pairs);
    read_field(jd, "segment_seconds", cfg.data.segment_seconds);
    read_field(jd, "augment", cfg.data.augment);
    read_field(jd, "max_effects", cfg.data.max_effects);
    read_field(jd, "max_resample_semitones", cfg.data.max_resample_semitones);
    read_field(jd, "max_transpose_semitones", cfg.data.max_transpose_semitones);
    read_field(jd, "benchmark_cross_family", cfg.data.benchmark_cross_family);
    if (jd.contains("track")) {
      const auto& jk = jd.at("track");
      reject_unknown_keys(
          jk, {"seconds", "polyphony", "pitch_low", "pitch_high", "tempo_low_bpm",
               "tempo_high_bpm"},
          "data.track");
      read_field(jk, "seconds", cfg.data.track.seconds);
      read_field(jk, "polyphony", cfg.data.track.polyphony);
      read_field(jk, "pitch_low", cfg.data.track.pitch_low);
      read_field(jk, "pitch_high", cfg.data.track.pitch_high);
      read_field(jk, "tempo_low_bpm", cfg.data.track.tempo_low_bpm);
      read_field(jk, "tempo_high_bpm", cfg.data.track.tempo_high_bpm);
    }
  }
  if (j.contains("eval")) {
    const auto& je = j.at("eval");
    reject_unknown_keys(
        je, {"mel_bands", "force_tracker", "gl_iterations", "pitch_frame_rate", "max_polyphony"},
        "eval");
    read_field(je, "mel_bands", cfg.eval.mel_bands);
    read_field(je, "force_tracker", cfg.eval.force_tracker);
    read_field(je, "gl_iterations", cfg.eval.gl_iterations);
    read_field(je, "pitch_frame_rate", cfg.eval.pitch_frame_rate);
    read_field(je, "max_polyphony", cfg.eval.max_polyphony);
  }
  return cfg;
}

}  // namespace vqtt

