#include "vqtt/pitch.hpp"

#include <algorithm>
#include <cmath>

#include "vqtt/common.hpp"
#include "vqtt/spectral.hpp"

namespace vqtt::eval {

double g_gate_mult = 1.5;  // experiment knob, to be removed

namespace {

// Linear interpolation of |S| at a fractional bin, with a small neighborhood
// max to absorb windowing spread.
double mag_at(const Eigen::RowVectorXd& mag, double bin) {
  const long lo = static_cast<long>(std::floor(bin));
  double best = 0.0;
  for (long b = lo - 1; b <= lo + 2; ++b) {
    if (b >= 0 && b < mag.size()) best = std::max(best, mag(b));
  }
  return best;
}

double salience(const Eigen::RowVectorXd& mag, double f0, double bin_hz, int harmonics,
                double decay, double nyquist) {
  double acc = 0.0;
  double w = 1.0;
  for (int h = 1; h <= harmonics; ++h, w *= decay) {
    const double f = h * f0;
    if (f >= nyquist) break;
    acc += w * mag_at(mag, f / bin_hz);
  }
  return acc;
}

}  // namespace

PitchFrameSets extract_pitch_sets(const Waveform& w, const PitchTrackerConfig& cfg) {
  PitchFrameSets out;
  out.frame_rate = cfg.frame_rate;
  if (w.samples.empty()) return out;

  spectral::SpectralConfig fe;
  fe.sample_rate = w.sample_rate;
  fe.fft_size = cfg.fft_size;
  fe.hop_seconds = 1.0 / cfg.frame_rate;
  const Mat mag = spectral::stft(w, fe).frames.cwiseAbs();
  const double bin_hz = static_cast<double>(w.sample_rate) / cfg.fft_size;
  const double nyquist = 0.5 * w.sample_rate;

  const double clip_peak = mag.maxCoeff();
  const long T = mag.rows();
  out.frames.resize(static_cast<size_t>(T));
  if (clip_peak <= 1e-9) return out;  // silence

  for (long t = 0; t < T; ++t) {
    const double frame_peak = mag.row(t).maxCoeff();
    if (20.0 * std::log10(frame_peak / clip_peak + 1e-12) < cfg.silence_db) continue;

    Eigen::RowVectorXd residual = mag.row(t);
    std::vector<int> found;
    double first_salience = 0.0;
    for (int voice = 0; voice < cfg.max_polyphony; ++voice) {
      int best_midi = -1;
      double best_s = 0.0;
      for (int m = cfg.midi_low; m <= cfg.midi_high; ++m) {
        const double s = salience(residual, data::midi_to_hz(m), bin_hz, cfg.harmonics,
                                  cfg.salience_decay, nyquist);
        if (s > best_s) {
          best_s = s;
          best_midi = m;
        }
      }
      if (best_midi < 0) break;
      if (voice == 0) {
        // require real support relative to the frame's strongest bin
        if (best_s < g_gate_mult * frame_peak) break;
        first_salience = best_s;
      } else if (best_s < cfg.peak_ratio * first_salience) {
        break;
      }
      found.push_back(best_midi);

      // spectral subtraction: blank the harmonic stack of the accepted pitch
      const double f0 = data::midi_to_hz(best_midi);
      for (int h = 1; h <= cfg.harmonics; ++h) {
        const double f = h * f0;
        if (f >= nyquist) break;
        const long center = static_cast<long>(std::round(f / bin_hz));
        for (long b = center - 2; b <= center + 2; ++b) {
          if (b >= 0 && b < residual.size()) residual(b) = 0.0;
        }
      }
    }
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    out.frames[static_cast<size_t>(t)] = std::move(found);
  }
  return out;
}

PitchFrameSets pitch_sets_from_events(const std::vector<data::NoteEvent>& events,
                                      double frame_rate, double total_seconds) {
  if (frame_rate <= 0.0) throw ConfigError("pitch_sets_from_events: frame_rate must be > 0");
  double end = total_seconds;
  if (end < 0.0) {
    end = 0.0;
    for (const auto& ev : events) end = std::max(end, ev.onset + ev.duration);
  }
  PitchFrameSets out;
  out.frame_rate = frame_rate;
  const long frames = static_cast<long>(std::ceil(end * frame_rate));
  out.frames.resize(static_cast<size_t>(std::max(0L, frames)));
  for (long i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) / frame_rate;
    std::vector<int>& set = out.frames[static_cast<size_t>(i)];
    for (const auto& ev : events) {
      if (ev.onset <= t && t < ev.onset + ev.duration) set.push_back(ev.pitch);
    }
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
  }
  return out;
}

double pitch_jaccard(const PitchFrameSets& a, const PitchFrameSets& b) {
  if (std::abs(a.frame_rate - b.frame_rate) > 1e-9) {
    throw ShapeError("pitch_jaccard: frame rates differ");
  }
  const size_t frames = std::max(a.frames.size(), b.frames.size());
  if (frames == 0) return 0.0;
  static const std::vector<int> kEmpty;
  double acc = 0.0;
  for (size_t i = 0; i < frames; ++i) {
    const auto& fa = i < a.frames.size() ? a.frames[i] : kEmpty;
    const auto& fb = i < b.frames.size() ? b.frames[i] : kEmpty;
    if (fa.empty() && fb.empty()) continue;  // contributes 0
    std::vector<int> inter, uni;
    std::set_intersection(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(inter));
    std::set_union(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(uni));
    acc += 1.0 - static_cast<double>(inter.size()) / static_cast<double>(uni.size());
  }
  return acc / static_cast<double>(frames);
}

}  // namespace vqtt::eval

