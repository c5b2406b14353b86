#pragma once

#include <filesystem>
#include <string>

#include "vqtt/dataset.hpp"
#include "vqtt/eval.hpp"
#include "vqtt/model.hpp"
#include "vqtt/train.hpp"

namespace vqtt {

// Project-wide configuration file (JSON). Every field is optional; the
// `preset` selects consistent spectral/model defaults which explicit fields
// then override. Unknown keys are rejected with the offending key named.
struct ProjectConfig {
  std::string preset = "toy";  // "toy" | "paper"
  spectral::SpectralConfig spectral;
  ModelConfig model;
  train::TrainConfig train;
  data::DataConfig data;

  struct EvalSettings {
    int mel_bands = 80;
    bool force_tracker = false;
    int gl_iterations = 60;
    double pitch_frame_rate = 32.0;
    int max_polyphony = 4;
  } eval;

  static ProjectConfig defaults(const std::string& preset = "toy");
  static ProjectConfig from_file(const std::filesystem::path& path);
  static ProjectConfig from_json_text(const std::string& text, const std::string& origin);
};

}  // namespace vqtt
