#include "vqtt/vq.hpp"

#include <cmath>

namespace vqtt::vq {

CodeSequence quantize(const Mat& latent, const Mat& codebook) {
  if (latent.cols() != codebook.cols()) {
    throw ShapeError("quantize: latent width " + std::to_string(latent.cols()) +
                     " != codebook width " + std::to_string(codebook.cols()));
  }
  const long L = latent.rows();
  const long K = codebook.rows();
  CodeSequence out;
  out.indices.resize(static_cast<size_t>(L));
  out.quantized.resize(L, latent.cols());

  // Literal squared distances with strict < so ties keep the lowest index.
  for (long i = 0; i < L; ++i) {
    long best = 0;
    double best_d = (latent.row(i) - codebook.row(0)).squaredNorm();
    for (long j = 1; j < K; ++j) {
      const double d = (latent.row(i) - codebook.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    out.indices[static_cast<size_t>(i)] = static_cast<int>(best);
    out.quantized.row(i) = codebook.row(best);
  }
  return out;
}

LossBreakdown vq_losses(const Mat& latent, const CodeSequence& codes, double beta) {
  if (latent.rows() != codes.quantized.rows() || latent.cols() != codes.quantized.cols()) {
    throw ShapeError("vq_losses: latent/quantized shape mismatch");
  }
  if (beta < 0.0) throw ConfigError("vq_losses: beta must be >= 0");
  const double msq =
      (codes.quantized - latent).array().square().sum() / static_cast<double>(latent.size());
  LossBreakdown lb;
  lb.codebook = msq;
  lb.commit = msq;
  lb.beta = beta;
  return lb;
}

double total_loss(const LossBreakdown& lb) { return lb.total(); }

nn::Var straight_through(nn::Tape& tape, const nn::Var& latent, const CodeSequence& codes) {
  if (latent->value.rows() != codes.quantized.rows() ||
      latent->value.cols() != codes.quantized.cols()) {
    throw ShapeError("straight_through: shape mismatch");
  }
  nn::Var out = nn::constant(codes.quantized);
  out->requires_grad = latent->requires_grad;
  tape.push([latent, out] {
    if (!out->has_grad() || !latent->requires_grad) return;
    latent->ensure_grad();
    latent->grad += out->grad;
  });
  return out;
}

VqLossVars vq_loss_vars(nn::Tape& tape, const nn::Var& latent, const nn::Var& codebook_var,
                        const std::vector<int>& indices) {
  const long L = latent->value.rows();
  if (static_cast<long>(indices.size()) != L) throw ShapeError("vq_loss_vars: index count");
  const double n = static_cast<double>(latent->value.size());

  Mat gathered(L, codebook_var->value.cols());
  for (long i = 0; i < L; ++i) gathered.row(i) = codebook_var->value.row(indices[i]);
  const double msq = (gathered - latent->value).array().square().sum() / n;

  Mat v(1, 1);
  v(0, 0) = msq;
  nn::Var cbk = nn::constant(v);
  cbk->requires_grad = codebook_var->requires_grad;
  nn::Var cmt = nn::constant(v);
  cmt->requires_grad = latent->requires_grad;

  auto gathered_keep = std::make_shared<Mat>(std::move(gathered));
  tape.push([latent, codebook_var, cbk, cmt, gathered_keep, indices, n] {
    if (cbk->has_grad() && codebook_var->requires_grad) {
      codebook_var->ensure_grad();
      const double g = cbk->grad(0, 0) * 2.0 / n;
      for (long i = 0; i < latent->value.rows(); ++i) {
        codebook_var->grad.row(indices[i]) +=
            g * (gathered_keep->row(i) - latent->value.row(i));
      }
    }
    if (cmt->has_grad() && latent->requires_grad) {
      latent->ensure_grad();
      const double g = cmt->grad(0, 0) * 2.0 / n;
      latent->grad += g * (latent->value - *gathered_keep);
    }
  });
  return {cbk, cmt};
}

CodebookStats codebook_stats(const std::vector<std::vector<int>>& histories, int codebook_size) {
  CodebookStats stats;
  stats.usage_histogram.assign(static_cast<size_t>(codebook_size), 0);
  long total = 0;
  for (const auto& h : histories) {
    for (int idx : h) {
      if (idx < 0 || idx >= codebook_size) throw ShapeError("codebook_stats: index out of range");
      ++stats.usage_histogram[static_cast<size_t>(idx)];
      ++total;
    }
  }
  if (total == 0) throw ConfigError("codebook_stats: no codes observed");
  double entropy = 0.0;
  for (long c : stats.usage_histogram) {
    if (c == 0) continue;
    ++stats.used_count;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    entropy -= p * std::log(p);
  }
  stats.perplexity = std::exp(entropy);
  return stats;
}

double bits_per_beat(double tempo_bpm, int used_count, double latent_frames_per_second) {
  if (tempo_bpm <= 0.0 || latent_frames_per_second <= 0.0) {
    throw ConfigError("bits_per_beat: tempo and frame rate must be positive");
  }
  if (used_count < 1) throw ConfigError("bits_per_beat: used_count must be >= 1");
  const double frames_per_beat = latent_frames_per_second * 60.0 / tempo_bpm;
  return frames_per_beat * std::log2(static_cast<double>(used_count));
}

}  // namespace vqtt::vq

