#pragma once

#include <cstdint>
#include <vector>

#include "vqtt/common.hpp"
#include "vqtt/wav.hpp"

namespace vqtt::spectral {

struct SpectralConfig {
  int sample_rate = kSampleRate;
  int fft_size = 2048;               // 1025 bins
  double hop_seconds = 1.0 / 32.0;   // 500 samples at 16 kHz

  int hop_samples() const;  // throws ConfigError if not a positive integer
  int bins() const { return fft_size / 2 + 1; }

  static SpectralConfig paper_scale() { return {}; }
  // 129 bins; hop shrunk to 1/128 s so the 256-sample window still overlaps.
  static SpectralConfig toy() { return {kSampleRate, 256, 1.0 / 128.0}; }
};

struct ComplexSpectrogram {
  CMat frames;  // T x F
  double hop_seconds = 0.0;
  int sample_rate = 0;
  int fft_size = 0;
};

// log(1 + |S|) magnitudes; entries are always >= 0.
struct Spectrogram {
  Mat frames;  // T x F
  double hop_seconds = 0.0;
  int sample_rate = 0;
  int fft_size = 0;
};

struct MelSpectrogram {
  Mat frames;  // T x M, dB (floored at -100)
  double hop_seconds = 0.0;
  int sample_rate = 0;
};

inline constexpr double kDbFloor = -100.0;
inline constexpr double kLogEps = 1e-5;

// In-place radix-2 FFT over `n` complex points; n must be a power of two.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// Centered STFT: Hann window of length fft_size, reflect padding,
// T = ceil(len / hop) frames. hop * sample_rate must be a positive integer.
ComplexSpectrogram stft(const Waveform& w, int fft_size, double hop_seconds);
ComplexSpectrogram stft(const Waveform& w, const SpectralConfig& cfg);

Spectrogram compress(const ComplexSpectrogram& c);

// exp(v) - 1, clamped at 0: linear-magnitude frames.
Mat decompress(const Spectrogram& s);

// Least-squares inverse STFT (overlap-add with squared-window normalization).
Waveform istft(const CMat& frames, int fft_size, double hop_seconds, int sample_rate);

struct GriffinLimOptions {
  int iterations = 60;
  bool random_phase_init = false;  // default: zero phase
  uint64_t seed = 0;
  // When set, receives ||  |STFT(x_t)| - target ||_F after the initial
  // inversion and after every iteration (iterations + 1 entries).
  std::vector<double>* objective_trace = nullptr;
};

Waveform griffin_lim(const Spectrogram& s, const GriffinLimOptions& opts = {});
Waveform griffin_lim(const Spectrogram& s, int iterations);

// Mel analysis used by the evaluation metrics; independent of the model preset.
struct MelConfig {
  SpectralConfig frontend;  // default: 2048-point FFT, 1/32 s hop
  int mel_bands = 80;
};

// Triangular HTK-scale filterbank rows (mel_bands x bins).
Mat mel_filterbank(int mel_bands, int fft_size, int sample_rate);

// 20*log10(mel magnitude + 1e-5), floored at -100 dB.
MelSpectrogram mel_db(const Waveform& w, int mel_bands, const SpectralConfig& frontend = {});

// RMSE over all time-band cells; shorter input is padded with silence frames.
// Band-count or frame-rate mismatch throws ShapeError.
double lsd(const MelSpectrogram& a, const MelSpectrogram& b);

struct MfccConfig {
  SpectralConfig frontend;
  int mel_bands = 40;
  int lo_coeff = 2;   // DCT-II coefficient indices, inclusive
  int hi_coeff = 13;
};

// T x (hi-lo+1) matrix of DCT-II coefficients of log mel energies.
Mat mfcc(const Waveform& w, const MfccConfig& cfg = {});

}  // namespace vqtt::spectral
