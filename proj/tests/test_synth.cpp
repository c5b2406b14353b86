#include "vqtt/synth.hpp"

#include <cmath>
#include <complex>
#include <set>

#include "doctest.h"
#include "vqtt/effects.hpp"
#include "vqtt/spectral.hpp"

using namespace vqtt;
using namespace vqtt::data;

namespace {

double dominant_hz(const Waveform& w, int fft_size = 8192) {
  const auto c = spectral::stft(w, fft_size, 1.0 / 32.0);
  const Mat mag = c.frames.cwiseAbs();
  long peak;
  mag.row(mag.rows() / 2).maxCoeff(&peak);
  return static_cast<double>(peak) * w.sample_rate / fft_size;
}

double band_db(const Waveform& w, double hz, int fft_size = 8192) {
  const auto c = spectral::stft(w, fft_size, 1.0 / 32.0);
  const Mat mag = c.frames.cwiseAbs();
  const long bin = std::lround(hz * fft_size / w.sample_rate);
  double best = 0.0;
  for (long b = std::max(0L, bin - 2); b <= std::min<long>(mag.cols() - 1, bin + 2); ++b) {
    best = std::max(best, mag(mag.rows() / 2, b));
  }
  return 20.0 * std::log10(best + 1e-12);
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generate_track is deterministic and long enough") {
  const Track a = generate_track(42);
  const Track b = generate_track(42);
  REQUIRE(a.events.size() == b.events.size());
  for (size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].onset == b.events[i].onset);
    CHECK(a.events[i].pitch == b.events[i].pitch);
  }
  CHECK(a.seconds >= 30.0);
  double last_end = 0.0;
  for (const auto& ev : a.events) last_end = std::max(last_end, ev.onset + ev.duration);
  CHECK(last_end >= 30.0);
}

TEST_CASE("monophonic tracks have no overlapping events") {
  TrackConfig cfg;
  cfg.polyphony = 1;
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const Track t = generate_track(seed, cfg);
    for (size_t i = 1; i < t.events.size(); ++i) {
      CHECK(t.events[i].onset >= t.events[i - 1].onset + t.events[i - 1].duration - 1e-9);
    }
  }
}

TEST_CASE("pitch histogram spans at least two octaves across seeds") {
  std::set<int> pitches;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Track t = generate_track(seed);
    for (const auto& ev : t.events) pitches.insert(ev.pitch);
  }
  CHECK(*pitches.rbegin() - *pitches.begin() >= 24);
}

TEST_CASE("transpose") {
  const Track t = generate_track(7);
  const auto same = transpose(t.events, 0);
  REQUIRE(same.size() == t.events.size());
  for (size_t i = 0; i < same.size(); ++i) CHECK(same[i].pitch == t.events[i].pitch);

  const auto round_trip = transpose(transpose(t.events, 5), -5);
  REQUIRE(round_trip.size() == t.events.size());
  for (size_t i = 0; i < round_trip.size(); ++i) CHECK(round_trip[i].pitch == t.events[i].pitch);

  std::vector<NoteEvent> high = {{0.0, 1.0, 125, 1.0}, {1.0, 1.0, 60, 1.0}};
  const auto clipped = transpose(high, 5);
  REQUIRE(clipped.size() == 1);  // pitch 130 dropped
  CHECK(clipped[0].pitch == 65);
}

TEST_CASE("sample_segment_pair windows") {
  const Track t = generate_track(11);
  Rng rng(3);
  for (int draw = 0; draw < 1000; ++draw) {
    auto [a, b] = sample_segment_pair(t.events, t.seconds, rng);
    CHECK(a.start >= 0.0);
    CHECK(a.start + 8.0 <= t.seconds + 1e-9);
    CHECK(std::abs(a.start - b.start) >= 2.0);
    for (const auto& ev : a.events) {
      CHECK(ev.onset >= 0.0);
      CHECK(ev.onset < 8.0);
    }
  }
  // relative onsets preserved
  Rng rng2(4);
  auto [a, b] = sample_segment_pair(t.events, t.seconds, rng2);
  REQUIRE(a.events.size() >= 2);
  bool found = false;
  for (const auto& orig : t.events) {
    if (std::abs(orig.onset - (a.events[0].onset + a.start)) < 1e-9 &&
        orig.pitch == a.events[0].pitch) {
      found = true;
    }
  }
  CHECK(found);

  std::vector<NoteEvent> few = {{0.0, 1.0, 60, 1.0}};
  CHECK_THROWS_AS(sample_segment_pair(few, 10.0, rng2), ConfigError);
}

TEST_CASE("reprogram keeps the family and changes parameters") {
  Rng rng(15);
  InstrumentPatch p = sample_patch(rng);
  int changed = 0;
  for (int i = 0; i < 1000; ++i) {
    const InstrumentPatch q = reprogram(p, rng);
    CHECK(q.family == p.family);
    if (q.harmonic_decay != p.harmonic_decay) ++changed;
  }
  CHECK(changed == 1000);

  Rng r1(77), r2(77);
  const InstrumentPatch a = reprogram(p, r1);
  const InstrumentPatch b = reprogram(p, r2);
  CHECK(a.harmonic_decay == b.harmonic_decay);
  CHECK(a.noise_mix == b.noise_mix);
}

TEST_CASE("synthesize: A4 has its fundamental at 440 Hz") {
  InstrumentPatch p;
  p.harmonic_decay = 1.5;
  p.adsr = {0.01, 0.1, 0.8, 0.1};
  p.noise_mix = 0.0;
  std::vector<NoteEvent> events = {{0.0, 2.0, 69, 1.0}};
  const Waveform w = synthesize(events, p);
  CHECK(dominant_hz(w) == doctest::Approx(440.0).epsilon(0.01));
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("synthesize: steep harmonic decay approaches a pure tone") {
  InstrumentPatch p;
  p.harmonic_decay = 8.0;
  p.adsr = {0.01, 0.1, 0.9, 0.1};
  p.noise_mix = 0.0;
  std::vector<NoteEvent> events = {{0.0, 2.0, 69, 1.0}};
  const Waveform w = synthesize(events, p);
  const double fundamental = band_db(w, 440.0);
  const double second = band_db(w, 880.0);
  CHECK(fundamental - second >= 40.0);
}

TEST_CASE("synthesize: disjoint notes confine their energy") {
  InstrumentPatch p;
  p.harmonic_decay = 1.0;
  p.adsr = {0.005, 0.05, 0.7, 0.05};
  p.noise_mix = 0.0;
  std::vector<NoteEvent> events = {{0.5, 0.5, 60, 1.0}, {2.0, 0.5, 67, 1.0}};
  const Waveform w = synthesize(events, p);
  auto window_rms = [&](double lo, double hi) {
    const size_t a = static_cast<size_t>(lo * w.sample_rate);
    const size_t b = std::min(w.samples.size(), static_cast<size_t>(hi * w.sample_rate));
    double acc = 0.0;
    for (size_t i = a; i < b; ++i) acc += w.samples[i] * w.samples[i];
    return std::sqrt(acc / std::max<size_t>(1, b - a));
  };
  CHECK(window_rms(0.5, 1.0) > 0.1);
  CHECK(window_rms(2.0, 2.5) > 0.1);
  CHECK(window_rms(0.0, 0.45) < 1e-6);
  CHECK(window_rms(1.2, 1.95) < 1e-6);
}

TEST_CASE("synthesize is deterministic given the noise seed") {
  Rng rng(21);
  InstrumentPatch p = sample_patch(InstrumentFamily::wind_string, rng);
  std::vector<NoteEvent> events = {{0.0, 1.0, 64, 0.8}, {1.0, 1.0, 71, 0.9}};
  const Waveform a = synthesize(events, p, kSampleRate, 5);
  const Waveform b = synthesize(events, p, kSampleRate, 5);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
}

TEST_CASE("empty effect chain is the identity up to normalization") {
  InstrumentPatch p;
  p.noise_mix = 0.0;
  std::vector<NoteEvent> events = {{0.0, 1.0, 60, 1.0}};
  const Waveform w = synthesize(events, p);
  const Waveform out = apply_effects(w, EffectChain{});
  REQUIRE(out.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) {
    CHECK(out.samples[i] == doctest::Approx(w.samples[i]).epsilon(1e-9));
  }
}

TEST_CASE("tremolo modulates the amplitude envelope at its rate") {
  Waveform tone;
  tone.sample_rate = kSampleRate;
  tone.samples.resize(4 * kSampleRate);
  for (size_t i = 0; i < tone.samples.size(); ++i) {
    tone.samples[i] = 0.8 * std::sin(2.0 * M_PI * 500.0 * i / kSampleRate);
  }
  EffectChain chain;
  chain.effects.push_back(Tremolo{4.0, 0.8});
  const Waveform out = apply_effects(tone, chain);

  // envelope: rectified signal smoothed over 5 ms, downsampled to 100 Hz
  const int env_rate = 100;
  const int step = kSampleRate / env_rate;
  std::vector<std::complex<double>> env;
  for (size_t i = 0; i + step <= out.samples.size(); i += step) {
    double acc = 0.0;
    for (int j = 0; j < step; ++j) acc += std::abs(out.samples[i + j]);
    env.push_back(acc / step);
  }
  env.resize(256);
  double mean = 0.0;
  for (auto& v : env) mean += v.real();
  mean /= static_cast<double>(env.size());
  for (auto& v : env) v -= mean;
  spectral::fft(env, false);
  long peak = 1;
  for (long k = 1; k < 128; ++k) {
    if (std::abs(env[k]) > std::abs(env[peak])) peak = k;
  }
  const double peak_hz = static_cast<double>(peak) * env_rate / 256.0;
  CHECK(peak_hz == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("effects are deterministic") {
  Rng rng(31);
  EffectChain chain = sample_effect_chain(rng, 4, 4.0);
  InstrumentPatch p;
  std::vector<NoteEvent> events = {{0.0, 1.5, 62, 1.0}};
  const Waveform w = synthesize(events, p);
  const Waveform a = apply_effects(w, chain);
  const Waveform b = apply_effects(w, chain);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
}

TEST_CASE("resample_augment rate law") {
  InstrumentPatch p;
  p.noise_mix = 0.0;
  std::vector<NoteEvent> events = {{0.0, 4.0, 69, 1.0}};  // 440 Hz
  const Waveform w = synthesize(events, p);

  const Waveform same = resample_augment(w, 0.0, 10.0);
  CHECK(same.samples.size() == w.samples.size());

  const Waveform up = resample_augment(w, 4.0, 10.0);
  const double expected_len = static_cast<double>(w.samples.size()) * std::pow(2.0, -4.0 / 12.0);
  CHECK(std::abs(static_cast<double>(up.samples.size()) - expected_len) < 3.0);
  CHECK(dominant_hz(up, 4096) == doctest::Approx(554.37).epsilon(0.01));

  // clipping rule
  const Waveform clipped = resample_augment(w, -4.0, 3.0);
  CHECK(clipped.samples.size() == static_cast<size_t>(3.0 * kSampleRate));
}

}  // TEST_SUITE

