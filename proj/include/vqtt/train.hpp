#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vqtt/dataset.hpp"
#include "vqtt/model.hpp"

namespace vqtt::train {

struct TrainConfig {
  int epochs = 32;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  double beta = 0.25;  // commitment weight in the total loss
  uint64_t seed = 0;
  std::string preset = "toy";  // "toy" | "paper"
  double grad_clip_norm = 10.0;

  void validate() const;
};

ModelConfig model_config_for_preset(const std::string& preset);
spectral::SpectralConfig spectral_config_for_preset(const std::string& preset);

struct StepResult {
  vq::LossBreakdown losses;
  double graph_total = 0.0;  // the total the optimizer actually minimized
  std::vector<int> indices;  // content codes of the batch
  double grad_norm = 0.0;
};

// One optimizer update on a batch of (x, y) compressed-spectrogram pairs.
// Throws DivergenceError naming the component that went non-finite.
StepResult train_step(Model& model, nn::Adam& opt,
                      const std::vector<std::pair<const Mat*, const Mat*>>& batch,
                      const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double recon = 0.0, codebook = 0.0, commit = 0.0, total = 0.0;
  int used_count = 0;
  double perplexity = 0.0;
};

// Spectrogram pairs are computed once from the dataset audio and cached on
// disk; the training loop itself never touches raw audio.
class SpectrogramCache {
 public:
  SpectrogramCache(const std::filesystem::path& manifest_path,
                   const spectral::SpectralConfig& frontend,
                   const std::filesystem::path& cache_dir);

  size_t size() const { return x_.size(); }
  const Mat& x(size_t i) const { return x_[i]; }
  const Mat& y(size_t i) const { return y_[i]; }

 private:
  std::vector<Mat> x_, y_;
};

struct FitResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::vector<EpochStats> history;
};

// epochs x dataset passes; per-epoch checkpoints plus best.ckpt; JSONL step
// log next to the checkpoints. `resume` continues from a saved checkpoint and
// reproduces the uninterrupted run exactly (same seed-derived shuffles).
FitResult fit(const std::filesystem::path& manifest_path, const TrainConfig& cfg,
              const std::filesystem::path& out_dir,
              const std::filesystem::path& resume = {});

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& cfg,
                     int epoch, const std::vector<EpochStats>& history, nn::Adam* opt);

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  TrainConfig config;
  int epoch = 0;
  std::vector<EpochStats> history;
  // optimizer state, aligned with Model::trainable()
  std::vector<Mat> adam_m, adam_v;
  long adam_steps = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vqtt::train
