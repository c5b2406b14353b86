#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vqtt/effects.hpp"
#include "vqtt/synth.hpp"

namespace vqtt::data {

struct DataConfig {
  int pairs = 200;
  double segment_seconds = 8.0;
  TrackConfig track;
  bool augment = true;              // reprogram + resample + effects
  int max_effects = 4;
  double max_resample_semitones = 4.0;
  int max_transpose_semitones = 5;  // style segment, symbolic, never 0
  bool benchmark_cross_family = false;  // force style patch from another family
};

// One self-supervised training pair: x and y come from the same track and
// share the patch and the whole transform chain; y is symbolically transposed.
struct PairRecord {
  int pair_id = 0;
  std::string x_path, y_path;
  std::string x_events_path, y_events_path;
  uint64_t track_seed = 0;
  InstrumentPatch patch;
  std::string patch_id;
  int transpose_y = 0;
  EffectChain chain;
  double start_x = 0.0, start_y = 0.0;
};

struct DatasetManifest {
  DataConfig config;
  uint64_t seed = 0;
  std::vector<PairRecord> pairs;
};

// One benchmark row: content and style from different tracks, target =
// content events rendered with the style patch. No augmentation.
struct BenchmarkRow {
  int pair_id = 0;
  std::string content_path, style_path, target_path;
  std::string content_events_path, style_events_path;
  InstrumentPatch content_patch, style_patch;
  uint64_t content_seed = 0, style_seed = 0;
};

struct BenchmarkManifest {
  DataConfig config;
  uint64_t seed = 0;
  std::vector<BenchmarkRow> rows;
};

DatasetManifest build_dataset(const DataConfig& cfg, uint64_t seed,
                              const std::filesystem::path& out_dir);
BenchmarkManifest build_benchmark(const DataConfig& cfg, uint64_t seed,
                                  const std::filesystem::path& out_dir);

// Line-delimited JSON: a header record followed by one record per pair/row.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_dataset_manifest(const std::filesystem::path& path);
void save_manifest(const BenchmarkManifest& m, const std::filesystem::path& path);
BenchmarkManifest load_benchmark_manifest(const std::filesystem::path& path);

void save_events(const std::vector<NoteEvent>& events, const std::filesystem::path& path);
std::vector<NoteEvent> load_events(const std::filesystem::path& path);

// Exactly `seconds` of audio: trims or zero-pads the tail.
Waveform fix_duration(const Waveform& w, double seconds);

}  // namespace vqtt::data
