#include "vqtt/model.hpp"

#include <cmath>

namespace vqtt {

using nn::SeqShape;
using nn::Tape;
using nn::Var;

void ModelConfig::validate() const {
  if (channels < 1 || freq_bins < 2 || codebook_size < 1) {
    throw ConfigError("model config: channels/freq_bins/codebook_size must be positive");
  }
  if (downsample_factor != 4) {
    throw ConfigError("model config: downsample_factor must be 4 (two stride-2 layers)");
  }
}

Model::Model(const ModelConfig& cfg, const spectral::SpectralConfig& frontend, uint64_t seed)
    : cfg_(cfg), frontend_(frontend) {
  cfg_.validate();
  if (frontend_.bins() != cfg_.freq_bins) {
    throw ConfigError("model config: freq_bins " + std::to_string(cfg_.freq_bins) +
                      " does not match front-end bins " + std::to_string(frontend_.bins()));
  }
  Rng rng(seed);
  const int C = cfg_.channels;
  const int F = cfg_.freq_bins;
  const int K = cfg_.codebook_size;
  const double eps = cfg_.batchnorm_eps;

  p_.ce_conv1 = nn::make_conv(F, C, 4, 2, 1, rng);
  p_.ce_bn1 = nn::make_batch_norm(C, eps);
  p_.ce_conv2 = nn::make_conv(C, C, 4, 2, 1, rng);
  p_.ce_bn2 = nn::make_batch_norm(C, eps);
  p_.ce_conv3 = nn::make_conv(C, C, 1, 1, 0, rng);
  // i.i.d. uniform on [-1/K, 1/K]
  p_.codebook = nn::parameter(Mat::NullaryExpr(
      K, C, [&] { return rng.uniform(-1.0 / K, 1.0 / K); }));

  p_.se_conv1 = nn::make_conv(F, C, 4, 2, 1, rng);
  p_.se_bn1 = nn::make_batch_norm(C, eps);
  p_.se_conv2 = nn::make_conv(C, C, 1, 1, 0, rng);
  p_.se_bn2 = nn::make_batch_norm(C, eps);
  p_.se_gru = nn::make_gru(C, C, rng);

  p_.de_bn0 = nn::make_batch_norm(C, eps);
  p_.de_conv1 = nn::make_conv(2 * C, C, 1, 1, 0, rng);
  p_.de_bn1 = nn::make_batch_norm(C, eps);
  p_.de_gru1 = nn::make_gru(C, C, rng);
  p_.de_bn2 = nn::make_batch_norm(C, eps);
  p_.de_tconv1 = nn::make_conv_transpose(C, C, 4, 2, 1, rng);
  p_.de_bn3 = nn::make_batch_norm(C, eps);
  p_.de_conv4 = nn::make_conv(2 * C, C, 1, 1, 0, rng);
  p_.de_bn4 = nn::make_batch_norm(C, eps);
  p_.de_gru2 = nn::make_gru(C, C, rng);
  p_.de_bn5 = nn::make_batch_norm(C, eps);
  p_.de_tconv2 = nn::make_conv_transpose(C, C, 4, 2, 1, rng);
  p_.de_bn6 = nn::make_batch_norm(C, eps);
  p_.de_conv7 = nn::make_conv(C, F, 1, 1, 0, rng);
  p_.de_bn7 = nn::make_batch_norm(F, eps);
  p_.de_gru3 = nn::make_gru(F, F, rng);
}

nn::NamedParams Model::registry() {
  nn::NamedParams r;
  r.add_conv("content.conv1", p_.ce_conv1);
  r.add_batch_norm("content.bn1", p_.ce_bn1);
  r.add_conv("content.conv2", p_.ce_conv2);
  r.add_batch_norm("content.bn2", p_.ce_bn2);
  r.add_conv("content.conv3", p_.ce_conv3);
  r.add("codebook", p_.codebook);
  r.add_conv("style.conv1", p_.se_conv1);
  r.add_batch_norm("style.bn1", p_.se_bn1);
  r.add_conv("style.conv2", p_.se_conv2);
  r.add_batch_norm("style.bn2", p_.se_bn2);
  r.add_gru("style.gru", p_.se_gru);
  r.add_batch_norm("decoder.bn0", p_.de_bn0);
  r.add_conv("decoder.conv1", p_.de_conv1);
  r.add_batch_norm("decoder.bn1", p_.de_bn1);
  r.add_gru("decoder.gru1", p_.de_gru1);
  r.add_batch_norm("decoder.bn2", p_.de_bn2);
  r.add_conv_transpose("decoder.tconv1", p_.de_tconv1);
  r.add_batch_norm("decoder.bn3", p_.de_bn3);
  r.add_conv("decoder.conv4", p_.de_conv4);
  r.add_batch_norm("decoder.bn4", p_.de_bn4);
  r.add_gru("decoder.gru2", p_.de_gru2);
  r.add_batch_norm("decoder.bn5", p_.de_bn5);
  r.add_conv_transpose("decoder.tconv2", p_.de_tconv2);
  r.add_batch_norm("decoder.bn6", p_.de_bn6);
  r.add_conv("decoder.conv7", p_.de_conv7);
  r.add_batch_norm("decoder.bn7", p_.de_bn7);
  r.add_gru("decoder.gru3", p_.de_gru3);
  return r;
}

std::vector<Var> Model::trainable() {
  std::vector<Var> out;
  for (auto& [name, v] : registry().params) out.push_back(v);
  return out;
}

namespace {

struct GraphContext {
  Tape& tape;
  ModelParameters& p;
  const ModelConfig& cfg;
  const ForwardOptions& opts;

  Var norm_act(const Var& x, nn::BatchNormParams& bn) const {
    Var n = nn::batch_norm(tape, x, bn, opts.training,
                           opts.training && opts.update_running_stats);
    return nn::leaky_relu(tape, n, cfg.leaky_relu_slope);
  }

  // conv[4,2] x2, then conv[1,1] in an additive residual
  std::pair<Var, SeqShape> content_latent(const Var& xv, const SeqShape& shape) const {
    SeqShape s2, s4;
    Var c1 = nn::conv1d(tape, xv, p.ce_conv1, shape, &s2);
    Var c2 = nn::conv1d(tape, norm_act(c1, p.ce_bn1), p.ce_conv2, s2, &s4);
    Var c3 = nn::conv1d(tape, norm_act(c2, p.ce_bn2), p.ce_conv3, s4);
    return {nn::add(tape, c2, c3), s4};
  }

  // conv[4,2], residual conv[1,1], GRU; final state is the style vector
  Var style_vector(const Var& yv, const SeqShape& shape) const {
    SeqShape ys2;
    Var e1 = nn::conv1d(tape, yv, p.se_conv1, shape, &ys2);
    Var e2 = nn::conv1d(tape, norm_act(e1, p.se_bn1), p.se_conv2, ys2);
    Var e3 = nn::add(tape, e1, e2);
    Var e4 = nn::gru(tape, norm_act(e3, p.se_bn2), p.se_gru, ys2);
    return nn::take_last_rows(tape, e4, ys2);
  }

  // 2x [conv(1,1) with style concatenated, GRU residual, convT(4,2)], then
  // conv(1,1), GRU residual, max(0, .). Style enters after each block's
  // norm+activation, unnormalized.
  std::pair<Var, SeqShape> decode_frames(const Var& st, const SeqShape& s4,
                                         const Var& style) const {
    Var d0 = norm_act(st, p.de_bn0);
    Var d1 = nn::conv1d(tape, nn::concat_cols(tape, d0, nn::broadcast_rows(tape, style, s4)),
                        p.de_conv1, s4);
    Var g1 = nn::gru(tape, norm_act(d1, p.de_bn1), p.de_gru1, s4);
    Var r1 = nn::add(tape, d1, g1);
    SeqShape up2;
    Var t1 = nn::conv1d_transpose(tape, norm_act(r1, p.de_bn2), p.de_tconv1, s4, &up2);
    Var d3 = norm_act(t1, p.de_bn3);
    Var d4 = nn::conv1d(tape, nn::concat_cols(tape, d3, nn::broadcast_rows(tape, style, up2)),
                        p.de_conv4, up2);
    Var g2 = nn::gru(tape, norm_act(d4, p.de_bn4), p.de_gru2, up2);
    Var r2 = nn::add(tape, d4, g2);
    SeqShape up4;
    Var t2 = nn::conv1d_transpose(tape, norm_act(r2, p.de_bn5), p.de_tconv2, up2, &up4);
    Var d7 = nn::conv1d(tape, norm_act(t2, p.de_bn6), p.de_conv7, up4);
    Var g3 = nn::gru(tape, norm_act(d7, p.de_bn7), p.de_gru3, up4);
    Var r3 = nn::add(tape, d7, g3);
    return {nn::relu(tape, r3), up4};
  }
};

Mat pad_rows_to_multiple(const Mat& frames, int multiple) {
  const long t = frames.rows();
  const long padded = ((t + multiple - 1) / multiple) * multiple;
  if (padded == t) return frames;
  Mat out = Mat::Zero(padded, frames.cols());
  out.topRows(t) = frames;
  return out;
}

}  // namespace

ForwardResult Model::forward_graph(Tape& tape, const Mat& x, const SeqShape& x_shape,
                                   const Mat& y, const SeqShape& y_shape,
                                   const ForwardOptions& opts) {
  if (x.cols() != cfg_.freq_bins || y.cols() != cfg_.freq_bins) {
    throw ShapeError("forward: input bin count does not match freq_bins");
  }
  if (x_shape.uniform_length() % cfg_.downsample_factor != 0) {
    throw ShapeError("forward: content length must be divisible by " +
                     std::to_string(cfg_.downsample_factor));
  }
  GraphContext g{tape, p_, cfg_, opts};

  Var xv = nn::constant(x);
  ForwardResult res;
  auto [latent, s4] = g.content_latent(xv, x_shape);
  res.latent = latent;
  res.latent_shape = s4;

  Var st;
  if (opts.frozen) {
    // Smooth surrogate for finite-difference probes: the stop-gradient side
    // of each term and the straight-through offset are pinned constants.
    res.indices = opts.frozen->indices;
    st = nn::add(tape, latent, nn::constant(opts.frozen->quantized0 - opts.frozen->latent0));
    Var gathered = nn::gather_rows(tape, p_.codebook, res.indices);
    res.codebook_term = nn::mse(tape, gathered, nn::constant(opts.frozen->latent0));
    res.commit_term = nn::mse(tape, latent, nn::constant(opts.frozen->quantized0));
  } else {
    const auto codes = vq::quantize(latent->value, p_.codebook->value);
    res.indices = codes.indices;
    st = vq::straight_through(tape, latent, codes);
    auto terms = vq::vq_loss_vars(tape, latent, p_.codebook, codes.indices);
    res.codebook_term = terms.codebook_term;
    res.commit_term = terms.commit_term;
  }

  Var yv = nn::constant(y);
  res.style = g.style_vector(yv, y_shape);

  auto [xhat, up4] = g.decode_frames(st, s4, res.style);
  res.xhat = xhat;
  res.xhat_shape = up4;

  res.recon = nn::mse(tape, res.xhat, xv);
  Var partial = nn::add(tape, res.recon, res.codebook_term);
  res.total = nn::add(tape, partial, nn::scale(tape, res.commit_term, opts.beta));
  return res;
}

ContentLatent Model::content_encode(const spectral::Spectrogram& x) const {
  if (x.frames.cols() != cfg_.freq_bins) {
    throw ShapeError("content_encode: expected " + std::to_string(cfg_.freq_bins) +
                     " bins, got " + std::to_string(x.frames.cols()));
  }
  if (x.frames.rows() < 1) throw ShapeError("content_encode: empty spectrogram");
  auto& self = const_cast<Model&>(*this);
  Tape tape(false);
  ForwardOptions opts;  // inference: running stats, no recording
  GraphContext g{tape, self.p_, cfg_, opts};
  const Mat frames = pad_rows_to_multiple(x.frames, cfg_.downsample_factor);
  auto [latent, s4] = g.content_latent(nn::constant(frames), SeqShape::uniform(1, frames.rows()));
  return ContentLatent{latent->value};
}

vq::CodeSequence Model::quantize_latent(const ContentLatent& latent) const {
  return vq::quantize(latent.frames, p_.codebook->value);
}

StyleEmbedding Model::style_encode(const spectral::Spectrogram& y) const {
  if (y.frames.cols() != cfg_.freq_bins) {
    throw ShapeError("style_encode: expected " + std::to_string(cfg_.freq_bins) +
                     " bins, got " + std::to_string(y.frames.cols()));
  }
  if (y.frames.rows() < 2) throw ShapeError("style_encode: input must have at least 2 frames");
  auto& self = const_cast<Model&>(*this);
  Tape tape(false);
  ForwardOptions opts;
  GraphContext g{tape, self.p_, cfg_, opts};
  Var s = g.style_vector(nn::constant(y.frames), SeqShape::uniform(1, y.frames.rows()));
  return StyleEmbedding{s->value.row(0).transpose()};
}

spectral::Spectrogram Model::decode(const vq::CodeSequence& codes, const StyleEmbedding& s) const {
  if (codes.quantized.cols() != cfg_.channels) {
    throw ShapeError("decode: code width does not match channels");
  }
  if (s.values.size() != cfg_.channels) {
    throw ShapeError("decode: style width does not match channels");
  }
  auto& self = const_cast<Model&>(*this);
  Tape tape(false);
  ForwardOptions opts;
  GraphContext g{tape, self.p_, cfg_, opts};
  auto [xhat, up4] =
      g.decode_frames(nn::constant(codes.quantized), SeqShape::uniform(1, codes.quantized.rows()),
                      nn::constant(s.values.transpose()));

  spectral::Spectrogram out;
  out.frames = xhat->value;
  out.hop_seconds = frontend_.hop_seconds;
  out.sample_rate = frontend_.sample_rate;
  out.fft_size = frontend_.fft_size;
  return out;
}

std::pair<spectral::Spectrogram, vq::LossBreakdown> Model::forward(
    const spectral::Spectrogram& x, const spectral::Spectrogram& y, double beta) const {
  auto& self = const_cast<Model&>(*this);
  Tape tape(false);
  ForwardOptions opts;
  opts.beta = beta;
  const Mat xf = pad_rows_to_multiple(x.frames, cfg_.downsample_factor);
  ForwardResult res =
      self.forward_graph(tape, xf, SeqShape::uniform(1, xf.rows()), y.frames,
                         SeqShape::uniform(1, y.frames.rows()), opts);
  spectral::Spectrogram xhat;
  xhat.frames = res.xhat->value.topRows(x.frames.rows());
  xhat.hop_seconds = x.hop_seconds;
  xhat.sample_rate = x.sample_rate;
  xhat.fft_size = x.fft_size;

  vq::LossBreakdown lb;
  lb.recon = res.recon->value(0, 0);
  lb.codebook = res.codebook_term->value(0, 0);
  lb.commit = res.commit_term->value(0, 0);
  lb.beta = beta;
  return {xhat, lb};
}

Waveform Model::transfer(const Waveform& content, const Waveform& style,
                         const TransferOptions& opts) const {
  const auto sx = spectral::compress(spectral::stft(content, frontend_));
  const auto sy = spectral::compress(spectral::stft(style, frontend_));
  if (sx.frames.rows() < cfg_.downsample_factor) {
    throw ShapeError("transfer: content input shorter than one latent frame");
  }
  if (sy.frames.rows() < 2) {
    throw ShapeError("transfer: style input shorter than one latent frame");
  }

  spectral::Spectrogram padded = sx;
  padded.frames = pad_rows_to_multiple(sx.frames, cfg_.downsample_factor);
  const ContentLatent latent = content_encode(padded);
  const vq::CodeSequence codes = quantize_latent(latent);
  const StyleEmbedding s = style_encode(sy);
  spectral::Spectrogram xhat = decode(codes, s);
  xhat.frames = xhat.frames.topRows(sx.frames.rows()).eval();

  spectral::GriffinLimOptions gl;
  gl.iterations = opts.griffin_lim_iterations;
  gl.seed = opts.seed;
  gl.random_phase_init = opts.random_phase_init;
  return spectral::griffin_lim(xhat, gl);
}

std::pair<Mat, SeqShape> pack_batch(const std::vector<const Mat*>& examples) {
  if (examples.empty()) throw ShapeError("pack_batch: empty batch");
  long rows = 0;
  for (const Mat* m : examples) rows += m->rows();
  Mat out(rows, examples[0]->cols());
  SeqShape shape;
  long at = 0;
  for (const Mat* m : examples) {
    if (m->cols() != out.cols()) throw ShapeError("pack_batch: column mismatch");
    out.middleRows(at, m->rows()) = *m;
    shape.lengths.push_back(m->rows());
    at += m->rows();
  }
  return {out, shape};
}

}  // namespace vqtt
