#include "vqtt/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "vqtt/rng.hpp"

namespace vqtt::spectral {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);  // periodic Hann
  }
  return w;
}

// Reflect-pad index into [0, len).
long reflect_index(long i, long len) {
  if (len == 1) return 0;
  const long period = 2 * (len - 1);
  long m = i % period;
  if (m < 0) m += period;
  return m < len ? m : period - m;
}

}  // namespace

int SpectralConfig::hop_samples() const {
  const double h = hop_seconds * sample_rate;
  const double r = std::round(h);
  if (!(r > 0.0) || std::abs(h - r) > 1e-9 * std::max(1.0, std::abs(h))) {
    throw ConfigError("hop_seconds * sample_rate must be a positive integer, got " +
                      std::to_string(h));
  }
  return static_cast<int>(r);
}

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (!is_power_of_two(static_cast<int>(n))) {
    throw ConfigError("FFT size must be a power of two, got " + std::to_string(n));
  }
  // Bit-reversal permutation.
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

ComplexSpectrogram stft(const Waveform& w, int fft_size, double hop_seconds) {
  SpectralConfig cfg{w.sample_rate, fft_size, hop_seconds};
  return stft(w, cfg);
}

ComplexSpectrogram stft(const Waveform& w, const SpectralConfig& cfg) {
  if (w.samples.empty()) throw ShapeError("stft: empty waveform");
  if (!is_power_of_two(cfg.fft_size)) {
    throw ConfigError("fft_size must be a power of two, got " + std::to_string(cfg.fft_size));
  }
  const int hop = cfg.hop_samples();
  const long len = static_cast<long>(w.samples.size());
  const long frames = (len + hop - 1) / hop;  // ceil(len / hop)
  const int n = cfg.fft_size;
  const int bins = n / 2 + 1;
  const auto window = hann_window(n);

  ComplexSpectrogram out;
  out.frames.resize(frames, bins);
  out.hop_seconds = static_cast<double>(hop) / w.sample_rate;
  out.sample_rate = w.sample_rate;
  out.fft_size = n;

  std::vector<std::complex<double>> buf(n);
  for (long t = 0; t < frames; ++t) {
    const long center = t * hop;
    for (int i = 0; i < n; ++i) {
      const long src = reflect_index(center - n / 2 + i, len);
      buf[i] = w.samples[static_cast<size_t>(src)] * window[i];
    }
    fft(buf, false);
    for (int b = 0; b < bins; ++b) out.frames(t, b) = buf[b];
  }
  return out;
}

Spectrogram compress(const ComplexSpectrogram& c) {
  Spectrogram s;
  s.frames = c.frames.cwiseAbs().unaryExpr([](double m) { return std::log1p(m); });
  s.hop_seconds = c.hop_seconds;
  s.sample_rate = c.sample_rate;
  s.fft_size = c.fft_size;
  return s;
}

Mat decompress(const Spectrogram& s) {
  return s.frames.unaryExpr([](double v) { return std::max(0.0, std::expm1(v)); });
}

Waveform istft(const CMat& frames, int fft_size, double hop_seconds, int sample_rate) {
  const int n = fft_size;
  const int bins = n / 2 + 1;
  if (frames.cols() != bins) throw ShapeError("istft: bin count does not match fft_size");
  SpectralConfig cfg{sample_rate, fft_size, hop_seconds};
  const int hop = cfg.hop_samples();
  const long T = frames.rows();
  const long out_len = T * hop;
  const auto window = hann_window(n);

  std::vector<double> acc(out_len + 2 * n, 0.0);
  std::vector<double> wsum(out_len + 2 * n, 0.0);
  std::vector<std::complex<double>> buf(n);
  for (long t = 0; t < T; ++t) {
    for (int b = 0; b < bins; ++b) buf[b] = frames(t, b);
    for (int b = bins; b < n; ++b) buf[b] = std::conj(frames(t, n - b));
    fft(buf, true);
    const long start = t * hop - n / 2 + n;  // offset by n to keep indices nonnegative
    for (int i = 0; i < n; ++i) {
      acc[start + i] += buf[i].real() * window[i];
      wsum[start + i] += window[i] * window[i];
    }
  }
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(out_len);
  for (long i = 0; i < out_len; ++i) {
    const double d = wsum[i + n];
    w.samples[static_cast<size_t>(i)] = d > 1e-10 ? acc[i + n] / d : 0.0;
  }
  return w;
}

namespace {

// Zero-padded centered analysis producing exactly `frames` rows. Together with
// istft() this forms an exact projection pair (istft is the least-squares
// inverse), which is what makes the Griffin-Lim objective provably
// non-increasing; the reflect-padded public stft() is for feature extraction.
CMat analyze_fixed(const Waveform& w, int fft_size, double hop_seconds, long frames) {
  SpectralConfig cfg{w.sample_rate, fft_size, hop_seconds};
  const int hop = cfg.hop_samples();
  const int n = fft_size;
  const int bins = n / 2 + 1;
  const auto window = hann_window(n);
  const long len = static_cast<long>(w.samples.size());
  CMat out(frames, bins);
  std::vector<std::complex<double>> buf(n);
  for (long t = 0; t < frames; ++t) {
    const long center = t * hop;
    for (int i = 0; i < n; ++i) {
      const long src = center - n / 2 + i;
      buf[i] = (src >= 0 && src < len) ? w.samples[static_cast<size_t>(src)] * window[i] : 0.0;
    }
    fft(buf, false);
    for (int b = 0; b < bins; ++b) out(t, b) = buf[b];
  }
  return out;
}

}  // namespace

Waveform griffin_lim(const Spectrogram& s, const GriffinLimOptions& opts) {
  if (opts.iterations < 0) throw ConfigError("griffin_lim: iterations must be >= 0");
  const Mat target = decompress(s);
  const long T = target.rows(), F = target.cols();

  CMat spec(T, F);
  if (opts.random_phase_init) {
    Rng rng(opts.seed);
    for (long t = 0; t < T; ++t) {
      for (long f = 0; f < F; ++f) {
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        spec(t, f) = target(t, f) * std::complex<double>(std::cos(a), std::sin(a));
      }
    }
  } else {
    spec = target.cast<std::complex<double>>();
  }

  auto record = [&](const CMat& analyzed) {
    if (!opts.objective_trace) return;
    double acc = 0.0;
    for (long t = 0; t < T; ++t)
      for (long f = 0; f < F; ++f) {
        const double d = std::abs(analyzed(t, f)) - target(t, f);
        acc += d * d;
      }
    opts.objective_trace->push_back(std::sqrt(acc));
  };
  if (opts.objective_trace) opts.objective_trace->clear();

  Waveform x = istft(spec, s.fft_size, s.hop_seconds, s.sample_rate);
  if (target.maxCoeff() <= 0.0) return x;  // silent spectrogram

  CMat analyzed = analyze_fixed(x, s.fft_size, s.hop_seconds, T);
  record(analyzed);
  for (int it = 0; it < opts.iterations; ++it) {
    // Project onto the target-magnitude set, then back onto consistent STFTs.
    for (long t = 0; t < T; ++t) {
      for (long f = 0; f < F; ++f) {
        const double m = std::abs(analyzed(t, f));
        analyzed(t, f) = m > 1e-300 ? analyzed(t, f) / m * target(t, f)
                                    : std::complex<double>(target(t, f), 0.0);
      }
    }
    x = istft(analyzed, s.fft_size, s.hop_seconds, s.sample_rate);
    analyzed = analyze_fixed(x, s.fft_size, s.hop_seconds, T);
    record(analyzed);
  }
  return x;
}

Waveform griffin_lim(const Spectrogram& s, int iterations) {
  GriffinLimOptions opts;
  opts.iterations = iterations;
  return griffin_lim(s, opts);
}

Mat mel_filterbank(int mel_bands, int fft_size, int sample_rate) {
  if (mel_bands < 1) throw ConfigError("mel_bands must be >= 1");
  const int bins = fft_size / 2 + 1;
  auto hz_to_mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(mel_bands + 2);
  for (int i = 0; i < mel_bands + 2; ++i) {
    centers[i] = mel_to_hz(mel_max * i / (mel_bands + 1));
  }
  Mat fb = Mat::Zero(mel_bands, bins);
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;
  for (int m = 0; m < mel_bands; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * bin_hz;
      if (f <= lo || f >= hi) continue;
      fb(m, b) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
    // Unit row sum: a flat magnitude spectrum maps to flat mel energies.
    const double sum = fb.row(m).sum();
    if (sum > 0.0) fb.row(m) /= sum;
  }
  return fb;
}

MelSpectrogram mel_db(const Waveform& w, int mel_bands, const SpectralConfig& frontend) {
  if (mel_bands < 1) throw ConfigError("mel_bands must be >= 1");
  SpectralConfig cfg = frontend;
  cfg.sample_rate = w.sample_rate;
  const ComplexSpectrogram c = stft(w, cfg);
  const Mat mag = c.frames.cwiseAbs();
  const Mat fb = mel_filterbank(mel_bands, cfg.fft_size, cfg.sample_rate);
  const Mat mel = mag * fb.transpose();  // T x M
  MelSpectrogram out;
  out.frames = mel.unaryExpr([](double e) {
    return std::max(kDbFloor, 20.0 * std::log10(e + kLogEps));
  });
  out.hop_seconds = c.hop_seconds;
  out.sample_rate = c.sample_rate;
  return out;
}

double lsd(const MelSpectrogram& a, const MelSpectrogram& b) {
  if (a.frames.cols() != b.frames.cols()) {
    throw ShapeError("lsd: mel band counts differ (" + std::to_string(a.frames.cols()) +
                     " vs " + std::to_string(b.frames.cols()) + ")");
  }
  if (std::abs(a.hop_seconds - b.hop_seconds) > 1e-12) {
    throw ShapeError("lsd: frame rates differ");
  }
  const long T = std::max(a.frames.rows(), b.frames.rows());
  const long M = a.frames.cols();
  double acc = 0.0;
  for (long t = 0; t < T; ++t) {
    for (long m = 0; m < M; ++m) {
      const double va = t < a.frames.rows() ? a.frames(t, m) : kDbFloor;
      const double vb = t < b.frames.rows() ? b.frames(t, m) : kDbFloor;
      acc += (va - vb) * (va - vb);
    }
  }
  return std::sqrt(acc / (static_cast<double>(T) * M));
}

Mat mfcc(const Waveform& w, const MfccConfig& cfg) {
  if (cfg.lo_coeff < 1 || cfg.hi_coeff <= cfg.lo_coeff) {
    throw ConfigError("mfcc: need 1 <= lo_coeff < hi_coeff");
  }
  SpectralConfig fe = cfg.frontend;
  fe.sample_rate = w.sample_rate;
  const ComplexSpectrogram c = stft(w, fe);
  const Mat mag = c.frames.cwiseAbs();
  const Mat fb = mel_filterbank(cfg.mel_bands, fe.fft_size, fe.sample_rate);
  const Mat logmel =
      (mag * fb.transpose()).unaryExpr([](double e) { return std::log(e + kLogEps); });

  const int M = cfg.mel_bands;
  const int n_out = cfg.hi_coeff - cfg.lo_coeff + 1;
  Mat dct(n_out, M);  // orthonormal DCT-II rows for coefficients lo..hi
  for (int k = 0; k < n_out; ++k) {
    const int coeff = cfg.lo_coeff + k;
    const double scale = coeff == 0 ? std::sqrt(1.0 / M) : std::sqrt(2.0 / M);
    for (int m = 0; m < M; ++m) {
      dct(k, m) = scale * std::cos(M_PI * coeff * (m + 0.5) / M);
    }
  }
  return logmel * dct.transpose();  // T x n_out
}

}  // namespace vqtt::spectral
