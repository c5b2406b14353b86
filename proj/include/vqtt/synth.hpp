#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vqtt/rng.hpp"
#include "vqtt/wav.hpp"

namespace vqtt::data {

struct NoteEvent {
  double onset = 0.0;     // seconds
  double duration = 0.0;  // seconds, > 0
  int pitch = 60;         // MIDI semitone 0..127
  double velocity = 1.0;  // (0, 1]
};

enum class InstrumentFamily { keyboard_guitar, bass, wind_string, pluck };

const char* family_name(InstrumentFamily f);
InstrumentFamily family_from_name(const std::string& name);

struct Adsr {
  double attack = 0.01;   // seconds
  double decay = 0.1;     // seconds
  double sustain = 0.7;   // level in [0, 1]
  double release = 0.1;   // seconds
};

struct InstrumentPatch {
  InstrumentFamily family = InstrumentFamily::keyboard_guitar;
  double harmonic_decay = 1.0;  // harmonic k has amplitude k^-harmonic_decay
  Adsr adsr;
  double vibrato_rate_hz = 0.0;
  double vibrato_depth_semitones = 0.0;
  double noise_mix = 0.0;  // [0, 1]
};

// Random patch with parameters inside the family's declared ranges.
InstrumentPatch sample_patch(InstrumentFamily family, Rng& rng);
InstrumentPatch sample_patch(Rng& rng);

// New patch from the same broad family, parameters resampled.
InstrumentPatch reprogram(const InstrumentPatch& patch, Rng& rng);

struct TrackConfig {
  double seconds = 32.0;
  int polyphony = 1;  // max simultaneous notes
  int pitch_low = 45;
  int pitch_high = 84;
  double tempo_low_bpm = 70.0;
  double tempo_high_bpm = 140.0;
};

struct Track {
  std::vector<NoteEvent> events;
  InstrumentPatch patch;
  double tempo_bpm = 120.0;
  double seconds = 0.0;
};

// Scale-constrained random walk; deterministic in the seed.
Track generate_track(uint64_t seed, const TrackConfig& cfg = {});

// pitch += semitones; events leaving [0, 127] are dropped.
std::vector<NoteEvent> transpose(const std::vector<NoteEvent>& events, int semitones);

struct SegmentWindow {
  std::vector<NoteEvent> events;  // onsets relative to the window start
  double start = 0.0;
};

SegmentWindow sample_segment(const std::vector<NoteEvent>& events, double track_seconds,
                             double segment_seconds, Rng& rng);

// Two windows from one track whose start offsets differ by at least
// `min_start_gap` seconds.
std::pair<SegmentWindow, SegmentWindow> sample_segment_pair(
    const std::vector<NoteEvent>& events, double track_seconds, Rng& rng,
    double segment_seconds = 8.0, double min_start_gap = 2.0);

double midi_to_hz(double pitch);

// Additive synthesis: harmonics k^-decay under an ADSR envelope, sinusoidal
// vibrato, and a lowpassed-noise layer. Peak-normalized to 0.9.
Waveform synthesize(const std::vector<NoteEvent>& events, const InstrumentPatch& patch,
                    int sample_rate = kSampleRate, uint64_t noise_seed = 0);

}  // namespace vqtt::data
