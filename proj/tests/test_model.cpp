#include "vqtt/model.hpp"

#include <cmath>

#include "doctest.h"
#include "vqtt/rng.hpp"

using namespace vqtt;
using nn::SeqShape;
using nn::Tape;
using nn::Var;

namespace {

ModelConfig tiny_config(int bins = 17) {
  ModelConfig c;
  c.channels = 8;
  c.freq_bins = bins;
  c.codebook_size = 8;
  return c;
}

// Front-end metadata is irrelevant for pure graph tests; bins must match.
spectral::SpectralConfig frontend_for_bins(int bins) {
  spectral::SpectralConfig fe;
  fe.fft_size = 2 * (bins - 1);
  fe.hop_seconds = 1.0 / 32.0;
  return fe;
}

spectral::Spectrogram random_spectrogram(long frames, int bins, uint64_t seed) {
  Rng rng(seed);
  spectral::Spectrogram s;
  s.frames = Mat::NullaryExpr(frames, bins, [&] { return rng.uniform(0.0, 2.0); });
  s.hop_seconds = 1.0 / 32.0;
  s.sample_rate = kSampleRate;
  s.fft_size = 2 * (bins - 1);
  return s;
}

Model tiny_model(uint64_t seed = 5, int bins = 17) {
  return Model(tiny_config(bins), frontend_for_bins(bins), seed);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("content_encode downsamples by 4 and is deterministic") {
  Model m = tiny_model();
  const auto x256 = random_spectrogram(256, 17, 1);
  CHECK(m.content_encode(x256).frames.rows() == 64);
  const auto x8 = random_spectrogram(8, 17, 2);
  CHECK(m.content_encode(x8).frames.rows() == 2);
  // T not divisible by 4 is padded up
  const auto x10 = random_spectrogram(10, 17, 3);
  CHECK(m.content_encode(x10).frames.rows() == 3);

  const Mat a = m.content_encode(x256).frames;
  const Mat b = m.content_encode(x256).frames;
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.cols() == 8);

  auto wrong = random_spectrogram(16, 33, 4);
  CHECK_THROWS_AS(m.content_encode(wrong), ShapeError);
}

TEST_CASE("style_encode yields a fixed-width vector for any length") {
  Model m = tiny_model();
  const auto y64 = random_spectrogram(64, 17, 10);
  const auto y256 = random_spectrogram(256, 17, 11);
  CHECK(m.style_encode(y64).values.size() == 8);
  CHECK(m.style_encode(y256).values.size() == 8);

  const Vec s1 = m.style_encode(y64).values;
  const Vec s2 = m.style_encode(y64).values;
  CHECK((s1 - s2).cwiseAbs().maxCoeff() == 0.0);

  // order sensitivity: reverse the frames
  auto rev = y64;
  rev.frames = y64.frames.colwise().reverse().eval();
  const Vec s3 = m.style_encode(rev).values;
  CHECK((s1 - s3).cwiseAbs().maxCoeff() > 1e-9);

  auto one = random_spectrogram(1, 17, 12);
  CHECK_THROWS_AS(m.style_encode(one), ShapeError);
}

TEST_CASE("decode upsamples by 4 and clamps at zero") {
  Model m = tiny_model();
  const auto x = random_spectrogram(256, 17, 20);
  const auto codes = m.quantize_latent(m.content_encode(x));
  const auto s = m.style_encode(random_spectrogram(64, 17, 21));
  const auto out = m.decode(codes, s);
  CHECK(out.frames.rows() == 256);
  CHECK(out.frames.cols() == 17);
  CHECK(out.frames.minCoeff() >= 0.0);
}

TEST_CASE("decode responds to the style vector") {
  Model m = tiny_model();
  const auto x = random_spectrogram(32, 17, 30);
  const auto codes = m.quantize_latent(m.content_encode(x));
  StyleEmbedding s = m.style_encode(random_spectrogram(32, 17, 31));
  const Mat base = m.decode(codes, s).frames;
  s.values(3) += 0.5;
  const Mat moved = m.decode(codes, s).frames;
  CHECK((base - moved).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("shape contract holds for T in {8, 64, 256} at 1025 bins") {
  Model m = tiny_model(7, 1025);
  for (long T : {8L, 64L, 256L}) {
    const auto x = random_spectrogram(T, 1025, 40 + static_cast<uint64_t>(T));
    const auto latent = m.content_encode(x);
    CHECK(latent.frames.rows() == T / 4);
    const auto s = m.style_encode(random_spectrogram(16, 1025, 50));
    const auto out = m.decode(m.quantize_latent(latent), s);
    CHECK(out.frames.rows() == T);
    CHECK(out.frames.cols() == 1025);
  }
}

TEST_CASE("forward composes the three networks and reports finite losses") {
  Model m = tiny_model();
  const auto x = random_spectrogram(256, 17, 60);
  const auto y = random_spectrogram(128, 17, 61);
  const auto [xhat, lb] = m.forward(x, y, 0.25);
  CHECK(xhat.frames.rows() == 256);
  CHECK(xhat.frames.cols() == 17);
  CHECK(std::isfinite(lb.total()));
  CHECK(lb.recon > 0.0);
  CHECK(lb.codebook == lb.commit);

  // identical style input -> identical loss (style path is deterministic)
  const auto [xhat2, lb2] = m.forward(x, y, 0.25);
  CHECK(lb2.total() == lb.total());
  CHECK((xhat2.frames - xhat.frames).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inference output depends on x only through the code indices") {
  Model m = tiny_model();
  const auto x = random_spectrogram(64, 17, 70);
  const auto y = random_spectrogram(64, 17, 71);
  const auto [xhat, lb] = m.forward(x, y, 0.25);

  const auto latent = m.content_encode(x);
  const auto codes = m.quantize_latent(latent);
  const auto s = m.style_encode(y);
  const Mat via_codes = m.decode(codes, s).frames;
  CHECK((xhat.frames - via_codes).cwiseAbs().maxCoeff() == 0.0);

  // replacing the latent with its quantized value changes nothing
  const auto requant = m.quantize_latent(ContentLatent{codes.quantized});
  CHECK(requant.indices == codes.indices);
  CHECK((m.decode(requant, s).frames - via_codes).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("every parameter group receives gradient after one training backward") {
  Model m = tiny_model();
  Rng rng(80);
  Mat x = Mat::NullaryExpr(64, 17, [&] { return rng.uniform(0.0, 2.0); });
  Mat y = Mat::NullaryExpr(48, 17, [&] { return rng.uniform(0.0, 2.0); });

  Tape tape(true);
  ForwardOptions opts;
  opts.training = true;
  opts.beta = 0.25;
  auto res = m.forward_graph(tape, x, SeqShape::uniform(1, 64), y, SeqShape::uniform(1, 48), opts);
  for (auto& [name, v] : m.registry().params) {
    v->ensure_grad();
    v->grad.setZero();
  }
  tape.backward(res.total);

  for (auto& [name, v] : m.registry().params) {
    INFO(name);
    CHECK(v->grad.cwiseAbs().maxCoeff() > 0.0);
  }
}

// End-to-end gradient check at toy width (channels 8, bins 17, K 8) on a
// subsample of entries per parameter; the acceptance suite sweeps all of them.
TEST_CASE("end-to-end gradients match finite differences") {
  Model m = tiny_model(23);
  Rng rng(90);
  const Mat x = Mat::NullaryExpr(16, 17, [&] { return rng.uniform(0.0, 2.0); });
  const Mat y = Mat::NullaryExpr(16, 17, [&] { return rng.uniform(0.0, 2.0); });
  const SeqShape xs = SeqShape::uniform(1, 16);
  const SeqShape ys = SeqShape::uniform(1, 16);

  // analytic gradients from the live graph
  Tape tape(true);
  ForwardOptions live;
  live.training = true;
  live.update_running_stats = false;
  live.beta = 0.25;
  auto base = m.forward_graph(tape, x, xs, y, ys, live);
  auto named = m.registry();
  for (auto& [name, v] : named.params) {
    v->ensure_grad();
    v->grad.setZero();
  }
  tape.backward(base.total);

  FrozenQuantization frozen;
  frozen.indices = base.indices;
  frozen.latent0 = base.latent->value;
  frozen.quantized0.resize(base.latent->value.rows(), base.latent->value.cols());
  for (long i = 0; i < frozen.quantized0.rows(); ++i) {
    frozen.quantized0.row(i) = m.params().codebook->value.row(frozen.indices[i]);
  }
  ForwardOptions fd = live;
  fd.frozen = &frozen;

  auto loss_at = [&]() {
    Tape probe(false);
    return m.forward_graph(probe, x, xs, y, ys, fd).total->value(0, 0);
  };
  {
    Tape probe(false);
    const double frozen_loss = m.forward_graph(probe, x, xs, y, ys, fd).total->value(0, 0);
    CHECK(frozen_loss == doctest::Approx(base.total->value(0, 0)).epsilon(1e-12));
  }

  const double h = 1e-6;  // the loss is strongly curved at random init
  int checked = 0, bad = 0;
  for (auto& [name, v] : named.params) {
    const long n = v->value.size();
    const long stride = std::max(1L, n / 8);  // ~8 entries per parameter
    for (long k = 0; k < n; k += stride) {
      double* data = v->value.data();
      const double orig = data[k];
      data[k] = orig + h;
      const double lp = loss_at();
      data[k] = orig - h;
      const double lm = loss_at();
      data[k] = orig;
      const double fdg = (lp - lm) / (2.0 * h);
      const double an = v->grad.data()[k];
      const double err = std::abs(fdg - an) / std::max({1.0, std::abs(fdg), std::abs(an)});
      ++checked;
      if (err >= 1e-3) {
        ++bad;
        MESSAGE(name, "[", k, "]: fd=", fdg, " analytic=", an, " err=", err);
      }
    }
  }
  CHECK(checked > 100);
  CHECK(bad == 0);
}

TEST_CASE("transfer keeps the content duration and is deterministic") {
  const spectral::SpectralConfig fe = spectral::SpectralConfig::toy();
  ModelConfig cfg = ModelConfig::toy();
  cfg.channels = 16;  // narrow for speed; bins stay 129
  Model m(cfg, fe, 3);

  Rng rng(101);
  Waveform content, style;
  content.samples.resize(kSampleRate / 2);
  style.samples.resize(kSampleRate / 4);
  for (auto& v : content.samples) v = 0.4 * std::sin(rng.uniform(0, 6.283)) * rng.uniform(0.5, 1.0);
  for (size_t i = 0; i < content.samples.size(); ++i) {
    content.samples[i] = 0.4 * std::sin(2.0 * M_PI * 330.0 * i / kSampleRate);
  }
  for (size_t i = 0; i < style.samples.size(); ++i) {
    style.samples[i] = 0.4 * std::sin(2.0 * M_PI * 220.0 * i / kSampleRate);
  }

  Model::TransferOptions opts;
  opts.griffin_lim_iterations = 4;
  const Waveform out1 = m.transfer(content, style, opts);
  const Waveform out2 = m.transfer(content, style, opts);
  const long hop = fe.hop_samples();
  CHECK(std::llabs(static_cast<long long>(out1.samples.size()) -
                   static_cast<long long>(content.samples.size())) <= hop);
  REQUIRE(out1.samples.size() == out2.samples.size());
  for (size_t i = 0; i < out1.samples.size(); ++i) CHECK(out1.samples[i] == out2.samples[i]);

  Waveform too_short;
  too_short.samples.assign(4, 0.1);
  CHECK_THROWS_AS(m.transfer(too_short, style, opts), ShapeError);
}

}  // TEST_SUITE
