#pragma once

#include <vector>

#include "vqtt/synth.hpp"
#include "vqtt/wav.hpp"

namespace vqtt::eval {

struct PitchFrameSets {
  std::vector<std::vector<int>> frames;  // sorted unique semitones per frame
  double frame_rate = 32.0;
};

struct PitchTrackerConfig {
  double frame_rate = 32.0;
  int fft_size = 4096;
  int midi_low = 36;
  int midi_high = 96;
  int max_polyphony = 4;
  int harmonics = 10;
  double salience_decay = 0.8;  // harmonic h weighted by decay^(h-1)
  double silence_db = -45.0;    // frame peak below this (re clip peak) -> empty set
  double peak_ratio = 0.35;     // later peaks must reach this share of the first
};

// Harmonic-sum salience peak picking with iterative spectral subtraction;
// a simplified stand-in for a full multi-pitch tracker.
PitchFrameSets extract_pitch_sets(const Waveform& w, const PitchTrackerConfig& cfg = {});

// Exact oracle for synthetic data: frame i holds pitch p iff an event with
// pitch p is sounding at time i / frame_rate.
PitchFrameSets pitch_sets_from_events(const std::vector<data::NoteEvent>& events,
                                      double frame_rate, double total_seconds = -1.0);

// Mean over frames of 1 - |A n B| / |A u B|; frames empty on both sides contribute 0.
double pitch_jaccard(const PitchFrameSets& a, const PitchFrameSets& b);

}  // namespace vqtt::eval
