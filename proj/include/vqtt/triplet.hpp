#pragma once

#include <filesystem>

#include "vqtt/nn.hpp"
#include "vqtt/wav.hpp"

namespace vqtt::eval {

struct TripletConfig {
  int hidden_dim = 64;
  int embedding_dim = 64;
  double margin = 0.2;
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
};

// Timbre dissimilarity model: pooled MFCC statistics (mean and standard
// deviation of coefficients 2-13 over time, 24-d) through two fully connected
// layers onto the unit sphere in 64 dimensions.
class TripletModel {
 public:
  TripletModel(const TripletConfig& cfg, uint64_t seed);

  static constexpr int kFeatureDim = 24;
  static Vec features(const Waveform& w);  // 24-d pooled MFCC stats

  Vec embed_features(const Vec& feat) const;  // unit-norm embedding
  Vec embed(const Waveform& w) const { return embed_features(features(w)); }
  double distance(const Waveform& a, const Waveform& b) const;
  double distance_features(const Vec& a, const Vec& b) const;

  const TripletConfig& config() const { return cfg_; }

  // anchors/positives/negatives as rows; returns the final epoch's mean loss
  double fit(const Mat& features, const std::vector<std::array<int, 3>>& triplets);

  void save(const std::filesystem::path& path) const;
  static TripletModel load(const std::filesystem::path& path);

  // z-score scaler estimated from the training features
  void set_scaler(const Vec& mean, const Vec& std);

 private:
  nn::Var embed_graph(nn::Tape& tape, const nn::Var& input) const;

  TripletConfig cfg_;
  nn::DenseParams fc1_, fc2_;
  Vec scaler_mean_, scaler_std_;
};

// Anchor/positive are same-pair segments, the negative comes from another pair.
TripletModel train_triplet(const std::filesystem::path& manifest_path, const TripletConfig& cfg);

}  // namespace vqtt::eval
