#pragma once

#include <vector>

#include "vqtt/common.hpp"
#include "vqtt/nn.hpp"

namespace vqtt::vq {

struct Codebook {
  Mat vectors;  // K x D
  long size() const { return vectors.rows(); }
  long dim() const { return vectors.cols(); }
};

struct CodeSequence {
  std::vector<int> indices;  // frame -> codebook row
  Mat quantized;             // L x D, rows copied from the codebook
};

// Nearest codebook row per latent frame (Euclidean, ties to the lowest index).
CodeSequence quantize(const Mat& latent, const Mat& codebook);

struct LossBreakdown {
  double recon = 0.0;     // L_ae, filled by the caller
  double codebook = 0.0;  // pulls codebook rows toward encoder outputs
  double commit = 0.0;    // pulls encoder outputs toward their codes
  double beta = 0.0;

  double total() const { return recon + codebook + beta * commit; }
};

// Mean squared quantization residual; codebook and commit are equal in value.
LossBreakdown vq_losses(const Mat& latent, const CodeSequence& codes, double beta);

double total_loss(const LossBreakdown& lb);

// Forward value = codes.quantized; gradient passes to `latent` untouched and
// the codebook receives nothing through this path.
nn::Var straight_through(nn::Tape& tape, const nn::Var& latent, const CodeSequence& codes);

// Differentiable loss terms: `codebook_term` routes gradients only into
// `codebook_var`, `commit_term` only into `latent`.
struct VqLossVars {
  nn::Var codebook_term;
  nn::Var commit_term;
};
VqLossVars vq_loss_vars(nn::Tape& tape, const nn::Var& latent, const nn::Var& codebook_var,
                        const std::vector<int>& indices);

struct CodebookStats {
  int used_count = 0;
  std::vector<long> usage_histogram;  // length K
  double perplexity = 0.0;            // exp(entropy), in [1, K]
};

CodebookStats codebook_stats(const std::vector<std::vector<int>>& histories, int codebook_size);

// (latent frames per second * 60 / tempo) * log2(used_count)
double bits_per_beat(double tempo_bpm, int used_count, double latent_frames_per_second);

}  // namespace vqtt::vq
