#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vqtt/dataset.hpp"
#include "vqtt/pitch.hpp"
#include "vqtt/triplet.hpp"

namespace vqtt::eval {

enum class BenchmarkMode { artificial, real };

BenchmarkMode benchmark_mode_from_name(const std::string& name);

struct EvalConfig {
  BenchmarkMode mode = BenchmarkMode::artificial;
  int mel_bands = 80;
  // Event files, when present, are used as the pitch reference; this forces
  // the salience tracker on every side instead.
  bool force_tracker = false;
  PitchTrackerConfig tracker;
  std::string system_label = "this-work";
};

// Per-example scores for the system under test, with the two trivial
// baselines evaluated on the same example for win-rate analysis.
struct ExampleScores {
  int pair_id = 0;
  bool ok = true;
  std::string error;

  // artificial mode (vs the synthesized target)
  double lsd_t = 0.0, timbre_t = 0.0, pitch_t = 0.0;
  double cp_content_lsd_t = 0.0, cp_content_timbre_t = 0.0, cp_content_pitch_t = 0.0;
  double cp_style_lsd_t = 0.0, cp_style_timbre_t = 0.0, cp_style_pitch_t = 0.0;

  // real mode (vs the content and style inputs)
  double timbre_s = 0.0, pitch_c = 0.0;
  double cp_content_timbre_s = 0.0;  // cp-content's pitch_c is trivially 0
  double cp_style_pitch_c = 0.0;     // cp-style's timbre_s is trivially 0
};

struct SystemMeans {
  double lsd_t = 0.0, timbre_t = 0.0, pitch_t = 0.0;
  double timbre_s = 0.0, pitch_c = 0.0;
};

struct EvalReport {
  BenchmarkMode mode = BenchmarkMode::artificial;
  std::string system_label;
  std::vector<ExampleScores> rows;
  int evaluated = 0;  // rows with ok == true
  int skipped = 0;
  std::map<std::string, SystemMeans> means;  // system label -> means

  // share of evaluated examples where the system beats the baseline
  double win_timbre_vs_cp_content = 0.0;  // timbre_s (real) / timbre_t (artificial)
  double win_pitch_vs_cp_style = 0.0;     // pitch_c (real) / pitch_t (artificial)
};

// System outputs are expected as <outputs_dir>/bench_XXXXX_output.wav per
// manifest row. Missing outputs are reported per row and skipped in means.
EvalReport run_benchmark(const std::filesystem::path& outputs_dir,
                         const std::filesystem::path& manifest_path,
                         const TripletModel& timbre_model, const EvalConfig& cfg);

std::string output_name_for_row(int pair_id);

// JSONL: one record per manifest row plus two aggregate baseline records.
void write_report_jsonl(const EvalReport& report, const std::filesystem::path& path);
// Aggregate table in the benchmark layout.
void write_report_table(const EvalReport& report, const std::filesystem::path& path);

}  // namespace vqtt::eval
