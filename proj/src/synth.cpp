#include "vqtt/synth.hpp"

#include <algorithm>
#include <cmath>

#include "vqtt/common.hpp"

namespace vqtt::data {

const char* family_name(InstrumentFamily f) {
  switch (f) {
    case InstrumentFamily::keyboard_guitar: return "keyboard_guitar";
    case InstrumentFamily::bass: return "bass";
    case InstrumentFamily::wind_string: return "wind_string";
    case InstrumentFamily::pluck: return "pluck";
  }
  return "unknown";
}

InstrumentFamily family_from_name(const std::string& name) {
  if (name == "keyboard_guitar") return InstrumentFamily::keyboard_guitar;
  if (name == "bass") return InstrumentFamily::bass;
  if (name == "wind_string") return InstrumentFamily::wind_string;
  if (name == "pluck") return InstrumentFamily::pluck;
  throw ConfigError("unknown instrument family: " + name);
}

InstrumentPatch sample_patch(InstrumentFamily family, Rng& rng) {
  InstrumentPatch p;
  p.family = family;
  switch (family) {
    case InstrumentFamily::keyboard_guitar:
      p.harmonic_decay = rng.uniform(0.8, 1.8);
      p.adsr = {rng.uniform(0.002, 0.01), rng.uniform(0.08, 0.4), rng.uniform(0.1, 0.4),
                rng.uniform(0.05, 0.25)};
      p.vibrato_rate_hz = 0.0;
      p.vibrato_depth_semitones = 0.0;
      p.noise_mix = rng.uniform(0.0, 0.05);
      break;
    case InstrumentFamily::bass:
      p.harmonic_decay = rng.uniform(1.5, 3.0);
      p.adsr = {rng.uniform(0.004, 0.02), rng.uniform(0.1, 0.3), rng.uniform(0.3, 0.6),
                rng.uniform(0.05, 0.2)};
      p.vibrato_rate_hz = 0.0;
      p.vibrato_depth_semitones = 0.0;
      p.noise_mix = rng.uniform(0.0, 0.03);
      break;
    case InstrumentFamily::wind_string:
      p.harmonic_decay = rng.uniform(1.0, 2.2);
      p.adsr = {rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2), rng.uniform(0.7, 0.95),
                rng.uniform(0.1, 0.4)};
      p.vibrato_rate_hz = rng.uniform(4.0, 6.5);
      p.vibrato_depth_semitones = rng.uniform(0.05, 0.4);
      p.noise_mix = rng.uniform(0.03, 0.15);
      break;
    case InstrumentFamily::pluck:
      p.harmonic_decay = rng.uniform(0.6, 1.2);
      p.adsr = {rng.uniform(0.001, 0.004), rng.uniform(0.05, 0.15), rng.uniform(0.0, 0.1),
                rng.uniform(0.03, 0.12)};
      p.vibrato_rate_hz = 0.0;
      p.vibrato_depth_semitones = 0.0;
      p.noise_mix = rng.uniform(0.05, 0.2);
      break;
  }
  return p;
}

InstrumentPatch sample_patch(Rng& rng) {
  const auto family = static_cast<InstrumentFamily>(rng.uniform_int(0, 3));
  return sample_patch(family, rng);
}

InstrumentPatch reprogram(const InstrumentPatch& patch, Rng& rng) {
  return sample_patch(patch.family, rng);
}

Track generate_track(uint64_t seed, const TrackConfig& cfg) {
  if (cfg.pitch_high <= cfg.pitch_low) throw ConfigError("track config: empty pitch range");
  Rng rng(seed);
  Track track;
  track.tempo_bpm = rng.uniform(cfg.tempo_low_bpm, cfg.tempo_high_bpm);
  track.patch = sample_patch(rng);

  // Scale degrees of a random key, major or natural minor.
  static const int kMajor[] = {0, 2, 4, 5, 7, 9, 11};
  static const int kMinor[] = {0, 2, 3, 5, 7, 8, 10};
  const int root = static_cast<int>(rng.uniform_int(0, 11));
  const bool major = rng.uniform() < 0.5;
  std::vector<int> scale;
  for (int p = cfg.pitch_low; p <= cfg.pitch_high; ++p) {
    const int deg = ((p - root) % 12 + 12) % 12;
    const int* degrees = major ? kMajor : kMinor;
    for (int d = 0; d < 7; ++d) {
      if (degrees[d] == deg) {
        scale.push_back(p);
        break;
      }
    }
  }
  if (scale.size() < 4) throw ConfigError("track config: pitch range too narrow for a scale");

  const double beat = 60.0 / track.tempo_bpm;
  size_t pos = scale.size() / 2;
  double t = 0.0;
  while (t < cfg.seconds) {
    // mostly stepwise motion with occasional leaps
    int step;
    const double r = rng.uniform();
    if (r < 0.7) {
      step = static_cast<int>(rng.uniform_int(-2, 2));
    } else if (r < 0.92) {
      step = static_cast<int>(rng.uniform_int(-4, 4));
    } else {
      step = (rng.uniform() < 0.5 ? -7 : 7);
    }
    pos = static_cast<size_t>(
        std::clamp<long>(static_cast<long>(pos) + step, 0, static_cast<long>(scale.size()) - 1));

    static const double kBeats[] = {0.5, 0.5, 1.0, 1.0, 1.0, 2.0};
    const double beats = kBeats[rng.uniform_int(0, 5)];
    const double dur = beats * beat;

    NoteEvent ev;
    ev.onset = t;
    ev.duration = dur * rng.uniform(0.85, 1.0);
    ev.pitch = scale[pos];
    ev.velocity = rng.uniform(0.5, 1.0);
    track.events.push_back(ev);

    if (cfg.polyphony > 1 && rng.uniform() < 0.4) {
      // add a chord tone above
      const size_t up = std::min(pos + static_cast<size_t>(rng.uniform_int(2, 4)),
                                 scale.size() - 1);
      if (up != pos) {
        NoteEvent second = ev;
        second.pitch = scale[up];
        second.velocity = ev.velocity * rng.uniform(0.6, 0.9);
        track.events.push_back(second);
      }
    }

    t += dur;
    if (rng.uniform() < 0.08) t += beat * 0.5;  // occasional rest
  }
  track.seconds = std::max(cfg.seconds, t);
  return track;
}

std::vector<NoteEvent> transpose(const std::vector<NoteEvent>& events, int semitones) {
  std::vector<NoteEvent> out;
  out.reserve(events.size());
  for (const auto& ev : events) {
    const int p = ev.pitch + semitones;
    if (p < 0 || p > 127) continue;  // clipped out of MIDI range
    NoteEvent moved = ev;
    moved.pitch = p;
    out.push_back(moved);
  }
  return out;
}

SegmentWindow sample_segment(const std::vector<NoteEvent>& events, double track_seconds,
                             double segment_seconds, Rng& rng) {
  if (track_seconds < segment_seconds) {
    throw ConfigError("sample_segment: track shorter than the segment length");
  }
  SegmentWindow win;
  win.start = rng.uniform(0.0, track_seconds - segment_seconds);
  for (const auto& ev : events) {
    if (ev.onset < win.start || ev.onset >= win.start + segment_seconds) continue;
    NoteEvent local = ev;
    local.onset = ev.onset - win.start;
    local.duration = std::min(ev.duration, segment_seconds - local.onset);
    if (local.duration <= 0.0) continue;
    win.events.push_back(local);
  }
  return win;
}

std::pair<SegmentWindow, SegmentWindow> sample_segment_pair(
    const std::vector<NoteEvent>& events, double track_seconds, Rng& rng,
    double segment_seconds, double min_start_gap) {
  if (track_seconds < 2.0 * segment_seconds) {
    throw ConfigError("sample_segment_pair: need at least " +
                      std::to_string(2.0 * segment_seconds) + " s of content");
  }
  SegmentWindow a = sample_segment(events, track_seconds, segment_seconds, rng);
  for (int tries = 0; tries < 1000; ++tries) {
    SegmentWindow b = sample_segment(events, track_seconds, segment_seconds, rng);
    if (std::abs(a.start - b.start) >= min_start_gap) return {a, b};
  }
  throw ConfigError("sample_segment_pair: could not find offset-separated windows");
}

double midi_to_hz(double pitch) { return 440.0 * std::pow(2.0, (pitch - 69.0) / 12.0); }

Waveform synthesize(const std::vector<NoteEvent>& events, const InstrumentPatch& patch,
                    int sample_rate, uint64_t noise_seed) {
  if (events.empty()) throw ConfigError("synthesize: no events");
  double end = 0.0;
  for (const auto& ev : events) {
    if (ev.duration <= 0.0 || ev.onset < 0.0) throw ConfigError("synthesize: bad event timing");
    end = std::max(end, ev.onset + ev.duration + patch.adsr.release);
  }
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(static_cast<size_t>(std::ceil(end * sample_rate)) + 1, 0.0);

  const double dt = 1.0 / sample_rate;
  size_t note_index = 0;
  for (const auto& ev : events) {
    const double f0 = midi_to_hz(ev.pitch);
    const int max_harm = std::max(
        1, std::min(24, static_cast<int>(0.45 * sample_rate /
                                         (f0 * std::pow(2.0, patch.vibrato_depth_semitones / 12.0)))));
    std::vector<double> amps(static_cast<size_t>(max_harm));
    double amp_sum = 0.0;
    for (int k = 1; k <= max_harm; ++k) {
      amps[static_cast<size_t>(k - 1)] = std::pow(static_cast<double>(k), -patch.harmonic_decay);
      amp_sum += amps[static_cast<size_t>(k - 1)];
    }

    const long n0 = static_cast<long>(std::floor(ev.onset * sample_rate));
    const long n_note = static_cast<long>(std::ceil(ev.duration * sample_rate));
    const long n_total = n_note + static_cast<long>(std::ceil(patch.adsr.release * sample_rate));

    uint64_t nseed = noise_seed + 0x9e3779b97f4a7c15ULL * (note_index + 1);
    Rng noise_rng(Rng::splitmix64(nseed));
    double lp_state = 0.0;
    // one-pole lowpass tracking the note register
    const double cutoff = std::min(6.0 * f0, 0.4 * sample_rate);
    const double lp_a = std::exp(-2.0 * M_PI * cutoff * dt);

    double phase = 0.0;
    for (long n = 0; n < n_total; ++n) {
      const size_t idx = static_cast<size_t>(n0 + n);
      if (idx >= w.samples.size()) break;
      const double t = n * dt;

      // ADSR with release starting at note-off from the current level
      double env;
      const auto& a = patch.adsr;
      auto held_level = [&](double tt) {
        if (tt < a.attack) return a.attack > 0.0 ? tt / a.attack : 1.0;
        if (tt < a.attack + a.decay) {
          return 1.0 - (1.0 - a.sustain) * (tt - a.attack) / std::max(a.decay, 1e-9);
        }
        return a.sustain;
      };
      if (t < ev.duration) {
        env = held_level(t);
      } else {
        const double rel = a.release > 0.0 ? 1.0 - (t - ev.duration) / a.release : 0.0;
        env = held_level(ev.duration) * std::max(0.0, rel);
      }
      if (env <= 0.0) continue;

      const double vib =
          patch.vibrato_depth_semitones != 0.0
              ? std::pow(2.0, patch.vibrato_depth_semitones *
                                  std::sin(2.0 * M_PI * patch.vibrato_rate_hz * t) / 12.0)
              : 1.0;
      phase += 2.0 * M_PI * f0 * vib * dt;

      double tone = 0.0;
      for (int k = 1; k <= max_harm; ++k) {
        tone += amps[static_cast<size_t>(k - 1)] * std::sin(k * phase);
      }
      tone /= amp_sum;

      const double white = noise_rng.uniform(-1.0, 1.0);
      lp_state = lp_a * lp_state + (1.0 - lp_a) * white;

      const double sample =
          ((1.0 - patch.noise_mix) * tone + patch.noise_mix * 3.0 * lp_state) * env * ev.velocity;
      w.samples[idx] += sample;
    }
    ++note_index;
  }

  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double g = 0.9 / peak;
    for (double& v : w.samples) v *= g;
  }
  return w;
}

}  // namespace vqtt::data

