#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vqtt/nn.hpp"
#include "vqtt/spectral.hpp"
#include "vqtt/vq.hpp"

namespace vqtt {

struct ModelConfig {
  int channels = 1024;       // embedding width D = channels
  int freq_bins = 1025;
  int codebook_size = 2048;
  int downsample_factor = 4;  // product of the two stride-2 convolutions
  double leaky_relu_slope = 0.01;
  double batchnorm_eps = 1e-5;

  static ModelConfig paper_scale() { return {}; }
  static ModelConfig toy() {
    ModelConfig c;
    c.channels = 64;
    c.freq_bins = 129;
    c.codebook_size = 64;
    return c;
  }
  void validate() const;
};

struct ContentLatent {
  Mat frames;  // L x D
};

struct StyleEmbedding {
  Vec values;  // channels-dimensional
};

// Everything learnable plus the batchnorm buffers, in graph order.
struct ModelParameters {
  // content encoder: conv[4,2] x2, residual conv[1,1], then VQ
  nn::ConvParams ce_conv1, ce_conv2, ce_conv3;
  nn::BatchNormParams ce_bn1, ce_bn2;
  nn::Var codebook;  // K x D

  // style encoder: conv[4,2], residual conv[1,1], GRU (final state = s)
  nn::ConvParams se_conv1, se_conv2;
  nn::BatchNormParams se_bn1, se_bn2;
  nn::GruParams se_gru;

  // decoder: 2x [conv(1,1)+style, GRU residual, convT(4,2)], conv(1,1),
  // GRU residual, max(0, .); last two layers sized to freq_bins
  nn::BatchNormParams de_bn0;
  nn::ConvParams de_conv1;
  nn::BatchNormParams de_bn1;
  nn::GruParams de_gru1;
  nn::BatchNormParams de_bn2;
  nn::ConvTransposeParams de_tconv1;
  nn::BatchNormParams de_bn3;
  nn::ConvParams de_conv4;
  nn::BatchNormParams de_bn4;
  nn::GruParams de_gru2;
  nn::BatchNormParams de_bn5;
  nn::ConvTransposeParams de_tconv2;
  nn::BatchNormParams de_bn6;
  nn::ConvParams de_conv7;
  nn::BatchNormParams de_bn7;
  nn::GruParams de_gru3;
};

// Discrete parts pinned at a probe point so finite differences see the smooth
// surrogate that straight-through estimation differentiates.
struct FrozenQuantization {
  std::vector<int> indices;
  Mat latent0;
  Mat quantized0;
};

struct ForwardOptions {
  bool training = false;
  bool update_running_stats = true;
  double beta = 0.25;
  const FrozenQuantization* frozen = nullptr;
};

struct ForwardResult {
  nn::Var xhat;
  nn::SeqShape xhat_shape;
  nn::Var latent;
  nn::SeqShape latent_shape;
  std::vector<int> indices;
  nn::Var style;  // batch x channels
  nn::Var recon, codebook_term, commit_term, total;
};

class Model {
 public:
  Model(const ModelConfig& cfg, const spectral::SpectralConfig& frontend, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const spectral::SpectralConfig& frontend() const { return frontend_; }
  ModelParameters& params() { return p_; }
  const ModelParameters& params() const { return p_; }

  nn::NamedParams registry();
  std::vector<nn::Var> trainable();

  // Full training/inference graph over a packed batch (x and y stacked
  // sequence-major; all x sequences one length, all y sequences one length).
  ForwardResult forward_graph(nn::Tape& tape, const Mat& x, const nn::SeqShape& x_shape,
                              const Mat& y, const nn::SeqShape& y_shape,
                              const ForwardOptions& opts);

  // Pure single-input inference ops.
  ContentLatent content_encode(const spectral::Spectrogram& x) const;
  vq::CodeSequence quantize_latent(const ContentLatent& latent) const;
  StyleEmbedding style_encode(const spectral::Spectrogram& y) const;
  spectral::Spectrogram decode(const vq::CodeSequence& codes, const StyleEmbedding& s) const;
  std::pair<spectral::Spectrogram, vq::LossBreakdown> forward(const spectral::Spectrogram& x,
                                                              const spectral::Spectrogram& y,
                                                              double beta) const;

  struct TransferOptions {
    int griffin_lim_iterations = 60;
    uint64_t seed = 0;
    bool random_phase_init = false;
  };
  Waveform transfer(const Waveform& content, const Waveform& style,
                    const TransferOptions& opts) const;
  Waveform transfer(const Waveform& content, const Waveform& style) const {
    return transfer(content, style, TransferOptions{});
  }

 private:
  ModelConfig cfg_;
  spectral::SpectralConfig frontend_;
  ModelParameters p_;
};

// Stack per-example frame matrices (same width) into one sequence-major batch.
std::pair<Mat, nn::SeqShape> pack_batch(const std::vector<const Mat*>& examples);

}  // namespace vqtt
