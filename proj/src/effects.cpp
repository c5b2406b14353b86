#include "vqtt/effects.hpp"

#include <algorithm>
#include <cmath>

#include "vqtt/common.hpp"

namespace vqtt::data {

namespace {

void normalize_peak(std::vector<double>& samples, double peak_target) {
  double peak = 0.0;
  for (double v : samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double g = peak_target / peak;
    for (double& v : samples) v *= g;
  }
}

std::vector<double> run_reverb(const std::vector<double>& in, const Reverb& rv, int sr) {
  // Schroeder network: four parallel feedback combs into two series allpasses.
  static const double kCombMs[4] = {29.7, 37.1, 41.1, 43.7};
  const size_t n = in.size();
  std::vector<double> wet(n, 0.0);
  for (double ms : kCombMs) {
    const size_t delay = std::max<size_t>(1, static_cast<size_t>(ms * 1e-3 * sr));
    const double g = std::pow(10.0, -3.0 * (ms * 1e-3) / std::max(rv.decay_seconds, 1e-3));
    std::vector<double> buf(delay, 0.0);
    size_t pos = 0;
    for (size_t i = 0; i < n; ++i) {
      const double out = buf[pos];
      buf[pos] = in[i] + g * out;
      pos = (pos + 1) % delay;
      wet[i] += out * 0.25;
    }
  }
  static const double kAllpassMs[2] = {5.0, 1.7};
  for (double ms : kAllpassMs) {
    const size_t delay = std::max<size_t>(1, static_cast<size_t>(ms * 1e-3 * sr));
    const double g = 0.7;
    std::vector<double> buf(delay, 0.0);
    size_t pos = 0;
    for (size_t i = 0; i < n; ++i) {
      const double delayed = buf[pos];
      const double y = -g * wet[i] + delayed;
      buf[pos] = wet[i] + g * y;
      pos = (pos + 1) % delay;
      wet[i] = y;
    }
  }
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = in[i] + rv.wet * wet[i];
  return out;
}

std::vector<double> run_overdrive(const std::vector<double>& in, const Overdrive& od) {
  const double norm = std::tanh(od.gain);
  std::vector<double> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(od.gain * in[i]) / norm;
  return out;
}

std::vector<double> run_phaser(const std::vector<double>& in, const Phaser& ph, int sr) {
  constexpr int kStages = 4;
  double state_x[kStages] = {0, 0, 0, 0};
  double state_y[kStages] = {0, 0, 0, 0};
  std::vector<double> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    const double t = static_cast<double>(i) / sr;
    const double fc = 800.0 * std::pow(2.0, ph.depth * std::sin(2.0 * M_PI * ph.rate_hz * t));
    const double tn = std::tan(M_PI * fc / sr);
    const double a = (tn - 1.0) / (tn + 1.0);
    double x = in[i];
    for (int s = 0; s < kStages; ++s) {
      const double y = a * x + state_x[s] - a * state_y[s];
      state_x[s] = x;
      state_y[s] = y;
      x = y;
    }
    out[i] = 0.5 * (in[i] + x);
  }
  return out;
}

std::vector<double> run_tremolo(const std::vector<double>& in, const Tremolo& tr, int sr) {
  std::vector<double> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) {
    const double t = static_cast<double>(i) / sr;
    const double lfo = 0.5 * (1.0 + std::sin(2.0 * M_PI * tr.rate_hz * t));
    out[i] = in[i] * ((1.0 - tr.depth) + tr.depth * lfo);
  }
  return out;
}

}  // namespace

std::string effect_name(const Effect& e) {
  if (std::holds_alternative<Reverb>(e)) return "reverb";
  if (std::holds_alternative<Overdrive>(e)) return "overdrive";
  if (std::holds_alternative<Phaser>(e)) return "phaser";
  return "tremolo";
}

EffectChain sample_effect_chain(Rng& rng, int max_effects, double max_semitones) {
  if (max_effects < 0 || max_effects > 4) throw ConfigError("effect chains hold 0-4 effects");
  EffectChain chain;
  std::vector<int> kinds = {0, 1, 2, 3};
  rng.shuffle(kinds);
  const int count = static_cast<int>(rng.uniform_int(0, max_effects));
  for (int i = 0; i < count; ++i) {
    switch (kinds[static_cast<size_t>(i)]) {
      case 0:
        chain.effects.push_back(Reverb{rng.uniform(0.2, 1.5), rng.uniform(0.2, 0.5)});
        break;
      case 1:
        chain.effects.push_back(Overdrive{rng.uniform(2.0, 10.0)});
        break;
      case 2:
        chain.effects.push_back(Phaser{rng.uniform(0.1, 2.0), rng.uniform(0.5, 1.0)});
        break;
      default:
        chain.effects.push_back(Tremolo{rng.uniform(2.0, 8.0), rng.uniform(0.3, 0.9)});
        break;
    }
  }
  if (max_semitones > 0.0) {
    chain.resample_semitones = rng.uniform(-max_semitones, max_semitones);
  }
  return chain;
}

Waveform apply_effects(const Waveform& w, const EffectChain& chain) {
  Waveform out = w;
  for (const Effect& e : chain.effects) {
    if (const auto* rv = std::get_if<Reverb>(&e)) {
      out.samples = run_reverb(out.samples, *rv, out.sample_rate);
    } else if (const auto* od = std::get_if<Overdrive>(&e)) {
      out.samples = run_overdrive(out.samples, *od);
    } else if (const auto* ph = std::get_if<Phaser>(&e)) {
      out.samples = run_phaser(out.samples, *ph, out.sample_rate);
    } else if (const auto* tr = std::get_if<Tremolo>(&e)) {
      out.samples = run_tremolo(out.samples, *tr, out.sample_rate);
    }
  }
  normalize_peak(out.samples, 0.9);
  return out;
}

Waveform resample_augment(const Waveform& w, double semitones, double clip_seconds) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  if (semitones == 0.0) {
    out.samples = w.samples;
  } else {
    out.samples = resample(w.samples, std::pow(2.0, semitones / 12.0));
  }
  const size_t max_len = static_cast<size_t>(clip_seconds * w.sample_rate);
  if (out.samples.size() > max_len) out.samples.resize(max_len);
  return out;
}

}  // namespace vqtt::data

