#include "vqtt/spectral.hpp"

#include <cmath>
#include <complex>

#include "doctest.h"
#include "vqtt/rng.hpp"
#include "vqtt/wav.hpp"

using namespace vqtt;
using namespace vqtt::spectral;

namespace {

Waveform make_sine(double freq, double seconds, int sr = kSampleRate, double amp = 0.5) {
  Waveform w;
  w.sample_rate = sr;
  const size_t n = static_cast<size_t>(seconds * sr);
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    w.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sr);
  }
  return w;
}

Waveform make_noise(double seconds, uint64_t seed, int sr = kSampleRate, double amp = 0.3) {
  Waveform w;
  w.sample_rate = sr;
  Rng rng(seed);
  const size_t n = static_cast<size_t>(seconds * sr);
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) w.samples[i] = amp * rng.uniform(-1.0, 1.0);
  return w;
}

// A tonal-plus-noise clip that gives Griffin-Lim something meaningful to chew on.
Waveform make_test_clip(double seconds, uint64_t seed) {
  Rng rng(seed);
  Waveform w = make_sine(rng.uniform(200.0, 800.0), seconds, kSampleRate, 0.4);
  const Waveform s2 = make_sine(rng.uniform(900.0, 2000.0), seconds, kSampleRate, 0.2);
  const Waveform nz = make_noise(seconds, seed + 1, kSampleRate, 0.02);
  for (size_t i = 0; i < w.samples.size(); ++i) w.samples[i] += s2.samples[i] + nz.samples[i];
  return w;
}

}  // namespace

TEST_SUITE("spectral") {

TEST_CASE("fft matches naive DFT") {
  const int n = 64;
  Rng rng(7);
  std::vector<std::complex<double>> a(n);
  for (auto& x : a) x = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto b = a;
  fft(b, false);
  for (int k = 0; k < n; ++k) {
    std::complex<double> ref(0, 0);
    for (int j = 0; j < n; ++j) {
      const double ang = -2.0 * M_PI * k * j / n;
      ref += a[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    CHECK(std::abs(b[k] - ref) < 1e-9);
  }
  auto c = b;
  fft(c, true);
  for (int j = 0; j < n; ++j) CHECK(std::abs(c[j] - a[j]) < 1e-10);
}

TEST_CASE("stft shape: 8 s at 16 kHz, hop 1/32 s -> 256 x 1025") {
  const Waveform w = make_sine(440.0, 8.0);
  const auto c = stft(w, 2048, 1.0 / 32.0);
  CHECK(c.frames.rows() == 256);
  CHECK(c.frames.cols() == 1025);
}

TEST_CASE("stft of silence is all-zero") {
  Waveform w;
  w.samples.assign(16000, 0.0);
  const auto c = stft(w, 2048, 1.0 / 32.0);
  CHECK(c.frames.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stft: bin-center sine peaks in a single bin") {
  // Bin 128 of a 2048-point FFT at 16 kHz is exactly 1000 Hz.
  const double freq = 128.0 * kSampleRate / 2048.0;
  const Waveform w = make_sine(freq, 2.0);
  const auto c = stft(w, 2048, 1.0 / 32.0);
  const Mat mag = c.frames.cwiseAbs();
  for (long t = 4; t < mag.rows() - 4; ++t) {
    long peak;
    mag.row(t).maxCoeff(&peak);
    CHECK(peak == 128);
    // Dominance: the peak carries most of the frame's energy.
    CHECK(mag(t, peak) > 10.0 * mag(t, 64));
  }
}

TEST_CASE("stft rejects non-integer hop") {
  const Waveform w = make_sine(440.0, 1.0);
  CHECK_THROWS_AS(stft(w, 2048, 1.0 / 3000.0), ConfigError);
  CHECK_THROWS_AS(stft(w, 1000, 1.0 / 32.0), ConfigError);  // not a power of two
  Waveform empty;
  CHECK_THROWS_AS(stft(empty, 2048, 1.0 / 32.0), ShapeError);
}

TEST_CASE("compress law and round trip") {
  const Waveform w = make_test_clip(1.0, 3);
  const auto c = stft(w, 256, 1.0 / 128.0);
  const auto s = compress(c);
  CHECK(s.frames.minCoeff() >= 0.0);
  const Mat mag = c.frames.cwiseAbs();
  const Mat back = decompress(s);
  for (long t = 0; t < mag.rows(); ++t) {
    for (long f = 0; f < mag.cols(); ++f) {
      CHECK(std::abs(back(t, f) - mag(t, f)) <= 1e-5 * std::max(1.0, mag(t, f)));
    }
  }
  // log1p identities
  CHECK(std::log1p(0.0) == 0.0);
  CHECK(std::abs(std::log1p(std::exp(1.0) - 1.0) - 1.0) < 1e-12);
}

TEST_CASE("compress is monotone in magnitude") {
  CHECK(std::log1p(0.3) < std::log1p(0.7));
  CHECK(std::log1p(10.0) < std::log1p(11.0));
}

TEST_CASE("istft reconstructs interior samples") {
  const Waveform w = make_test_clip(1.0, 11);
  const auto c = stft(w, 256, 1.0 / 128.0);
  const Waveform back = istft(c.frames, c.fft_size, c.hop_seconds, c.sample_rate);
  REQUIRE(back.samples.size() == w.samples.size());
  for (size_t i = 400; i + 400 < w.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - w.samples[i]) < 1e-8);
  }
}

TEST_CASE("griffin_lim objective is non-increasing") {
  const Waveform w = make_test_clip(1.0, 21);
  const auto s = compress(stft(w, 256, 1.0 / 128.0));
  std::vector<double> trace;
  GriffinLimOptions opts;
  opts.iterations = 30;
  opts.objective_trace = &trace;
  griffin_lim(s, opts);
  REQUIRE(trace.size() == 31);
  for (size_t i = 1; i < trace.size(); ++i) {
    CHECK(trace[i] <= trace[i - 1] + 1e-9 * std::max(1.0, trace[0]));
  }
}

TEST_CASE("griffin_lim beats the zero-iteration estimate") {
  const Waveform w = make_test_clip(2.0, 5);
  const auto s = compress(stft(w, 256, 1.0 / 128.0));
  GriffinLimOptions zero_iter;
  zero_iter.iterations = 0;
  zero_iter.random_phase_init = true;
  zero_iter.seed = 99;
  const Waveform w0 = griffin_lim(s, zero_iter);
  GriffinLimOptions sixty;
  sixty.iterations = 60;
  sixty.random_phase_init = true;
  sixty.seed = 99;
  const Waveform w60 = griffin_lim(s, sixty);

  const SpectralConfig mel_fe = SpectralConfig::toy();
  const auto ref = mel_db(w, 40, mel_fe);
  const double lsd0 = lsd(mel_db(w0, 40, mel_fe), ref);
  const double lsd60 = lsd(mel_db(w60, 40, mel_fe), ref);
  CHECK(lsd60 < lsd0);
}

TEST_CASE("griffin_lim of silence is silent") {
  Spectrogram s;
  s.frames = Mat::Zero(64, 129);
  s.hop_seconds = 1.0 / 128.0;
  s.sample_rate = kSampleRate;
  s.fft_size = 256;
  const Waveform w = griffin_lim(s, 10);
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak < 1e-12);
}

TEST_CASE("griffin_lim is deterministic given a seed") {
  const Waveform w = make_test_clip(0.5, 8);
  const auto s = compress(stft(w, 256, 1.0 / 128.0));
  GriffinLimOptions opts;
  opts.iterations = 0;
  opts.random_phase_init = true;
  opts.seed = 1234;
  const Waveform a = griffin_lim(s, opts);
  const Waveform b = griffin_lim(s, opts);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
}

TEST_CASE("mel_db: silence sits at the -100 dB floor") {
  Waveform w;
  w.samples.assign(kSampleRate, 0.0);
  const auto m = mel_db(w, 32);
  CHECK(m.frames.minCoeff() == kDbFloor);
  CHECK(m.frames.maxCoeff() == kDbFloor);
}

TEST_CASE("mel_db: 10x amplitude shifts by +20 dB") {
  const Waveform w = make_test_clip(1.0, 17);
  Waveform loud = w;
  for (auto& v : loud.samples) v *= 10.0;
  const auto a = mel_db(w, 32);
  const auto b = mel_db(loud, 32);
  for (long t = 0; t < a.frames.rows(); ++t) {
    for (long m = 0; m < a.frames.cols(); ++m) {
      if (a.frames(t, m) > -60.0) {
        CHECK(b.frames(t, m) - a.frames(t, m) == doctest::Approx(20.0).epsilon(0.01));
      }
    }
  }
}

TEST_CASE("lsd basics") {
  const Waveform w = make_test_clip(1.0, 30);
  const auto a = mel_db(w, 24);
  CHECK(lsd(a, a) == 0.0);

  MelSpectrogram b = a;
  b.frames.array() += 6.0;
  CHECK(lsd(a, b) == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(lsd(b, a) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("lsd matches an independent RMSE oracle on random inputs") {
  Rng rng(42);
  MelSpectrogram a, b;
  a.frames = Mat::NullaryExpr(17, 24, [&] { return rng.uniform(-100.0, 0.0); });
  b.frames = Mat::NullaryExpr(17, 24, [&] { return rng.uniform(-100.0, 0.0); });
  a.hop_seconds = b.hop_seconds = 1.0 / 32.0;

  double acc = 0.0;
  for (long t = 0; t < 17; ++t)
    for (long m = 0; m < 24; ++m) acc += std::pow(a.frames(t, m) - b.frames(t, m), 2);
  const double oracle = std::sqrt(acc / (17.0 * 24.0));
  CHECK(lsd(a, b) == doctest::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("lsd: band mismatch is an error, shorter input is padded") {
  MelSpectrogram a, b, c;
  a.frames = Mat::Constant(4, 8, kDbFloor);
  b.frames = Mat::Constant(4, 9, kDbFloor);
  c.frames = Mat::Constant(2, 8, kDbFloor);
  CHECK_THROWS_AS(lsd(a, b), ShapeError);
  // c padded with silence -> identical to a (both at the floor)
  CHECK(lsd(a, c) == 0.0);
}

TEST_CASE("mfcc: impulse (flat spectrum) has near-zero coefficients 2-13") {
  Waveform w;
  w.samples.assign(kSampleRate / 2, 0.0);
  w.samples[4000] = 0.9;
  MfccConfig cfg;
  const Mat m = mfcc(w, cfg);
  CHECK(m.cols() == 12);
  CHECK(m.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("mfcc: shifting by whole frames shifts rows") {
  const Waveform w = make_test_clip(1.0, 55);
  MfccConfig cfg;
  cfg.frontend = SpectralConfig::toy();
  const int hop = cfg.frontend.hop_samples();
  Waveform shifted;
  shifted.sample_rate = w.sample_rate;
  shifted.samples.assign(2 * hop, 0.0);
  shifted.samples.insert(shifted.samples.end(), w.samples.begin(), w.samples.end());

  const Mat a = mfcc(w, cfg);
  const Mat b = mfcc(shifted, cfg);
  for (long t = 4; t < a.rows() - 4; ++t) {
    CHECK((b.row(t + 2) - a.row(t)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("spectral ops are pure: repeat calls are bit-identical") {
  const Waveform w = make_test_clip(0.5, 77);
  const auto a = stft(w, 256, 1.0 / 128.0);
  const auto b = stft(w, 256, 1.0 / 128.0);
  CHECK((a.frames - b.frames).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("wav round trip and resampling") {
  const Waveform w = make_sine(440.0, 0.25);
  const auto path = std::filesystem::temp_directory_path() / "vqtt_test_tone.wav";
  save_wav(path, w);
  const Waveform r = load_wav(path);
  REQUIRE(r.samples.size() == w.samples.size());
  double max_err = 0.0;
  for (size_t i = 0; i < r.samples.size(); ++i) {
    max_err = std::max(max_err, std::abs(r.samples[i] - w.samples[i]));
  }
  CHECK(max_err < 1e-4);  // 16-bit quantization
  std::filesystem::remove(path);
}

TEST_CASE("resample shifts a tone's frequency") {
  const Waveform w = make_sine(440.0, 1.0);
  Waveform up;
  up.sample_rate = kSampleRate;
  up.samples = resample(w.samples, std::pow(2.0, 4.0 / 12.0));
  const auto c = stft(up, 4096, 1.0 / 32.0);
  const Mat mag = c.frames.cwiseAbs();
  long peak;
  mag.row(mag.rows() / 2).maxCoeff(&peak);
  const double peak_hz = static_cast<double>(peak) * kSampleRate / 4096.0;
  CHECK(peak_hz == doctest::Approx(554.37).epsilon(0.01));
}

}  // TEST_SUITE
