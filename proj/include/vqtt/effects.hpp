#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vqtt/rng.hpp"
#include "vqtt/wav.hpp"

namespace vqtt::data {

struct Reverb {
  double decay_seconds = 0.8;  // sampled in [0.2, 1.5]
  double wet = 0.3;            // sampled in [0.2, 0.5]
};

struct Overdrive {
  double gain = 4.0;  // sampled in [2, 10]
};

struct Phaser {
  double rate_hz = 0.5;  // sampled in [0.1, 2]; 4 allpass stages
  double depth = 0.7;    // sweep width in octaves around 800 Hz, [0.5, 1]
};

struct Tremolo {
  double rate_hz = 4.0;  // sampled in [2, 8]
  double depth = 0.5;    // sampled in [0.3, 0.9]
};

using Effect = std::variant<Reverb, Overdrive, Phaser, Tremolo>;

std::string effect_name(const Effect& e);

struct EffectChain {
  std::vector<Effect> effects;  // at most 4, applied in order
  std::optional<double> resample_semitones;  // in [-4, 4]
};

// 0..max_effects distinct effects plus a resample amount (when max_semitones > 0).
EffectChain sample_effect_chain(Rng& rng, int max_effects = 4, double max_semitones = 4.0);

// Applies the chain in order and re-normalizes to peak 0.9. The resample
// amount is not applied here; see resample_augment.
Waveform apply_effects(const Waveform& w, const EffectChain& chain);

// Playback-rate change by 2^(semitones/12); duration scales inversely and the
// result is clipped to clip_seconds.
Waveform resample_augment(const Waveform& w, double semitones, double clip_seconds = 8.0);

}  // namespace vqtt::data
