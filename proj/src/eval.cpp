#include "vqtt/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "vqtt/spectral.hpp"

namespace vqtt::eval {

using nlohmann::json;

BenchmarkMode benchmark_mode_from_name(const std::string& name) {
  if (name == "artificial") return BenchmarkMode::artificial;
  if (name == "real") return BenchmarkMode::real;
  throw ConfigError("unknown benchmark mode '" + name + "' (want artificial or real)");
}

std::string output_name_for_row(int pair_id) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "bench_%05d_output.wav", pair_id);
  return buf;
}

namespace {

struct RowContext {
  Waveform content, style, output;
  std::optional<Waveform> target;
  PitchFrameSets content_pitch, style_pitch, output_pitch;
  std::optional<PitchFrameSets> target_pitch;
  spectral::MelSpectrogram content_mel, style_mel, output_mel;
  std::optional<spectral::MelSpectrogram> target_mel;
  Vec content_feat, style_feat, output_feat;
  std::optional<Vec> target_feat;
};

}  // namespace

EvalReport run_benchmark(const std::filesystem::path& outputs_dir,
                         const std::filesystem::path& manifest_path,
                         const TripletModel& timbre_model, const EvalConfig& cfg) {
  const auto manifest = data::load_benchmark_manifest(manifest_path);
  const auto data_dir = manifest_path.parent_path();
  const bool artificial = cfg.mode == BenchmarkMode::artificial;

  EvalReport report;
  report.mode = cfg.mode;
  report.system_label = cfg.system_label;

  SystemMeans sys{}, cpc{}, cps{};
  for (const auto& row : manifest.rows) {
    ExampleScores s;
    s.pair_id = row.pair_id;
    const auto output_path = outputs_dir / output_name_for_row(row.pair_id);
    if (!std::filesystem::exists(output_path)) {
      s.ok = false;
      s.error = "missing output file: " + output_path.string();
      std::fprintf(stderr, "[eval] warning: %s (row excluded from means)\n", s.error.c_str());
      report.rows.push_back(std::move(s));
      ++report.skipped;
      continue;
    }

    RowContext ctx;
    try {
      ctx.content = load_wav(data_dir / row.content_path);
      ctx.style = load_wav(data_dir / row.style_path);
      ctx.output = load_wav(output_path);
      if (artificial) ctx.target = load_wav(data_dir / row.target_path);

      const double seg_seconds =
          static_cast<double>(ctx.content.samples.size()) / ctx.content.sample_rate;
      const auto content_events = data::load_events(data_dir / row.content_events_path);
      const auto style_events = data::load_events(data_dir / row.style_events_path);

      // pitch references: the event oracle unless the tracker is forced
      if (cfg.force_tracker) {
        ctx.content_pitch = extract_pitch_sets(ctx.content, cfg.tracker);
        ctx.style_pitch = extract_pitch_sets(ctx.style, cfg.tracker);
        if (artificial) ctx.target_pitch = extract_pitch_sets(*ctx.target, cfg.tracker);
      } else {
        ctx.content_pitch =
            pitch_sets_from_events(content_events, cfg.tracker.frame_rate, seg_seconds);
        ctx.style_pitch =
            pitch_sets_from_events(style_events, cfg.tracker.frame_rate, seg_seconds);
        // the target is the content events under the style patch
        if (artificial) ctx.target_pitch = ctx.content_pitch;
      }
      ctx.output_pitch = extract_pitch_sets(ctx.output, cfg.tracker);

      ctx.content_feat = TripletModel::features(ctx.content);
      ctx.style_feat = TripletModel::features(ctx.style);
      ctx.output_feat = TripletModel::features(ctx.output);
      if (artificial) ctx.target_feat = TripletModel::features(*ctx.target);

      if (artificial) {
        ctx.content_mel = spectral::mel_db(ctx.content, cfg.mel_bands);
        ctx.style_mel = spectral::mel_db(ctx.style, cfg.mel_bands);
        ctx.output_mel = spectral::mel_db(ctx.output, cfg.mel_bands);
        ctx.target_mel = spectral::mel_db(*ctx.target, cfg.mel_bands);

        s.lsd_t = spectral::lsd(ctx.output_mel, *ctx.target_mel);
        s.timbre_t = timbre_model.distance_features(ctx.output_feat, *ctx.target_feat);
        s.pitch_t = pitch_jaccard(ctx.output_pitch, *ctx.target_pitch);
        s.cp_content_lsd_t = spectral::lsd(ctx.content_mel, *ctx.target_mel);
        s.cp_content_timbre_t = timbre_model.distance_features(ctx.content_feat, *ctx.target_feat);
        s.cp_content_pitch_t = pitch_jaccard(ctx.content_pitch, *ctx.target_pitch);
        s.cp_style_lsd_t = spectral::lsd(ctx.style_mel, *ctx.target_mel);
        s.cp_style_timbre_t = timbre_model.distance_features(ctx.style_feat, *ctx.target_feat);
        s.cp_style_pitch_t = pitch_jaccard(ctx.style_pitch, *ctx.target_pitch);
      } else {
        s.timbre_s = timbre_model.distance_features(ctx.output_feat, ctx.style_feat);
        s.pitch_c = pitch_jaccard(ctx.output_pitch, ctx.content_pitch);
        s.cp_content_timbre_s =
            timbre_model.distance_features(ctx.content_feat, ctx.style_feat);
        s.cp_style_pitch_c = pitch_jaccard(ctx.style_pitch, ctx.content_pitch);
      }
    } catch (const std::exception& e) {
      s.ok = false;
      s.error = e.what();
      std::fprintf(stderr, "[eval] warning: row %d failed: %s\n", row.pair_id, e.what());
      report.rows.push_back(std::move(s));
      ++report.skipped;
      continue;
    }

    ++report.evaluated;
    if (artificial) {
      sys.lsd_t += s.lsd_t;
      sys.timbre_t += s.timbre_t;
      sys.pitch_t += s.pitch_t;
      cpc.lsd_t += s.cp_content_lsd_t;
      cpc.timbre_t += s.cp_content_timbre_t;
      cpc.pitch_t += s.cp_content_pitch_t;
      cps.lsd_t += s.cp_style_lsd_t;
      cps.timbre_t += s.cp_style_timbre_t;
      cps.pitch_t += s.cp_style_pitch_t;
      if (s.timbre_t < s.cp_content_timbre_t) report.win_timbre_vs_cp_content += 1.0;
      if (s.pitch_t < s.cp_style_pitch_t) report.win_pitch_vs_cp_style += 1.0;
    } else {
      sys.timbre_s += s.timbre_s;
      sys.pitch_c += s.pitch_c;
      cpc.timbre_s += s.cp_content_timbre_s;
      cps.pitch_c += s.cp_style_pitch_c;
      if (s.timbre_s < s.cp_content_timbre_s) report.win_timbre_vs_cp_content += 1.0;
      if (s.pitch_c < s.cp_style_pitch_c) report.win_pitch_vs_cp_style += 1.0;
    }
    report.rows.push_back(std::move(s));
  }

  if (report.evaluated > 0) {
    const double n = report.evaluated;
    for (auto* m : {&sys, &cpc, &cps}) {
      m->lsd_t /= n;
      m->timbre_t /= n;
      m->pitch_t /= n;
      m->timbre_s /= n;
      m->pitch_c /= n;
    }
    report.win_timbre_vs_cp_content /= n;
    report.win_pitch_vs_cp_style /= n;
  }
  report.means[cfg.system_label] = sys;
  report.means["cp-content"] = cpc;
  report.means["cp-style"] = cps;
  return report;
}

void write_report_jsonl(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write report: " + path.string());
  const bool artificial = report.mode == BenchmarkMode::artificial;
  for (const auto& s : report.rows) {
    json j{{"pair_id", s.pair_id}, {"system", report.system_label}, {"ok", s.ok}};
    if (!s.ok) {
      j["error"] = s.error;
    } else if (artificial) {
      j["lsd_t"] = s.lsd_t;
      j["timbre_t"] = s.timbre_t;
      j["pitch_t"] = s.pitch_t;
      j["cp_content"] = {{"lsd_t", s.cp_content_lsd_t},
                         {"timbre_t", s.cp_content_timbre_t},
                         {"pitch_t", s.cp_content_pitch_t}};
      j["cp_style"] = {{"lsd_t", s.cp_style_lsd_t},
                       {"timbre_t", s.cp_style_timbre_t},
                       {"pitch_t", s.cp_style_pitch_t}};
    } else {
      j["timbre_s"] = s.timbre_s;
      j["pitch_c"] = s.pitch_c;
      j["cp_content"] = {{"timbre_s", s.cp_content_timbre_s}};
      j["cp_style"] = {{"pitch_c", s.cp_style_pitch_c}};
    }
    f << j.dump() << "\n";
  }
  // two aggregate baseline records keep the table's rows reproducible from
  // the JSONL alone
  for (const char* label : {"cp-content", "cp-style"}) {
    const auto& m = report.means.at(label);
    json j{{"system", label}, {"aggregate", true}, {"examples", report.evaluated}};
    if (artificial) {
      j["lsd_t"] = m.lsd_t;
      j["timbre_t"] = m.timbre_t;
      j["pitch_t"] = m.pitch_t;
    } else {
      j["timbre_s"] = m.timbre_s;
      j["pitch_c"] = m.pitch_c;
    }
    f << j.dump() << "\n";
  }
}

void write_report_table(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write report table: " + path.string());
  const bool artificial = report.mode == BenchmarkMode::artificial;
  char line[256];
  std::snprintf(line, sizeof(line), "# %s benchmark: %d examples evaluated, %d skipped\n",
                artificial ? "artificial" : "real", report.evaluated, report.skipped);
  f << line;
  if (artificial) {
    f << "system        LSD_T     Timbre_T  Pitch_T\n";
    for (const auto& label : {std::string("cp-content"), std::string("cp-style"),
                              report.system_label}) {
      const auto& m = report.means.at(label);
      std::snprintf(line, sizeof(line), "%-13s %-9.4f %-9.4f %-9.4f\n", label.c_str(), m.lsd_t,
                    m.timbre_t, m.pitch_t);
      f << line;
    }
  } else {
    f << "system        Timbre_S  Pitch_C\n";
    for (const auto& label : {std::string("cp-content"), std::string("cp-style"),
                              report.system_label}) {
      const auto& m = report.means.at(label);
      // self-comparisons are trivially zero; print a dash like the table layout
      if (label == "cp-content") {
        std::snprintf(line, sizeof(line), "%-13s %-9.4f %-9s\n", label.c_str(), m.timbre_s, "-");
      } else if (label == "cp-style") {
        std::snprintf(line, sizeof(line), "%-13s %-9s %-9.4f\n", label.c_str(), "-", m.pitch_c);
      } else {
        std::snprintf(line, sizeof(line), "%-13s %-9.4f %-9.4f\n", label.c_str(), m.timbre_s,
                      m.pitch_c);
      }
      f << line;
    }
  }
  std::snprintf(line, sizeof(line),
                "# win rate vs cp-content (timbre): %.1f%%; vs cp-style (pitch): %.1f%%\n",
                100.0 * report.win_timbre_vs_cp_content, 100.0 * report.win_pitch_vs_cp_style);
  f << line;
}

}  // namespace vqtt::eval

