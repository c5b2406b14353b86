#pragma once

#include <filesystem>
#include <vector>

#include "vqtt/common.hpp"

namespace vqtt {

inline constexpr int kSampleRate = 16000;  // project-wide rate, fixed

struct Waveform {
  std::vector<double> samples;  // amplitude in [-1, 1]
  int sample_rate = kSampleRate;

  double seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Reads a mono WAV (16-bit PCM or 32-bit float; multi-channel is downmixed)
// and resamples to 16 kHz. Throws IoError on malformed files.
Waveform load_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM at the waveform's sample rate.
void save_wav(const std::filesystem::path& path, const Waveform& w);

// Windowed-sinc rate conversion. `rate_factor` > 1 shortens the signal and
// shifts content up in frequency: out(n) = in(n * rate_factor).
std::vector<double> resample(const std::vector<double>& in, double rate_factor);

// Resample between sample rates (e.g. file rate -> 16 kHz).
std::vector<double> resample_to_rate(const std::vector<double>& in, int from_rate, int to_rate);

}  // namespace vqtt
