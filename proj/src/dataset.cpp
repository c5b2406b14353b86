#include "vqtt/dataset.hpp"

#include <fstream>

#include "json.hpp"
#include "vqtt/common.hpp"

namespace vqtt::data {

using nlohmann::json;

namespace {

json patch_to_json(const InstrumentPatch& p) {
  return json{{"family", family_name(p.family)},
              {"harmonic_decay", p.harmonic_decay},
              {"adsr", {p.adsr.attack, p.adsr.decay, p.adsr.sustain, p.adsr.release}},
              {"vibrato_rate_hz", p.vibrato_rate_hz},
              {"vibrato_depth_semitones", p.vibrato_depth_semitones},
              {"noise_mix", p.noise_mix}};
}

InstrumentPatch patch_from_json(const json& j) {
  InstrumentPatch p;
  p.family = family_from_name(j.at("family").get<std::string>());
  p.harmonic_decay = j.at("harmonic_decay").get<double>();
  const auto& a = j.at("adsr");
  p.adsr = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>(),
            a.at(3).get<double>()};
  p.vibrato_rate_hz = j.at("vibrato_rate_hz").get<double>();
  p.vibrato_depth_semitones = j.at("vibrato_depth_semitones").get<double>();
  p.noise_mix = j.at("noise_mix").get<double>();
  return p;
}

json chain_to_json(const EffectChain& c) {
  json effects = json::array();
  for (const Effect& e : c.effects) {
    if (const auto* rv = std::get_if<Reverb>(&e)) {
      effects.push_back({{"type", "reverb"},
                         {"decay_seconds", rv->decay_seconds},
                         {"wet", rv->wet}});
    } else if (const auto* od = std::get_if<Overdrive>(&e)) {
      effects.push_back({{"type", "overdrive"}, {"gain", od->gain}});
    } else if (const auto* ph = std::get_if<Phaser>(&e)) {
      effects.push_back({{"type", "phaser"}, {"rate_hz", ph->rate_hz}, {"depth", ph->depth}});
    } else if (const auto* tr = std::get_if<Tremolo>(&e)) {
      effects.push_back({{"type", "tremolo"}, {"rate_hz", tr->rate_hz}, {"depth", tr->depth}});
    }
  }
  json out{{"effects", effects}};
  if (c.resample_semitones) out["resample_semitones"] = *c.resample_semitones;
  return out;
}

EffectChain chain_from_json(const json& j) {
  EffectChain c;
  for (const auto& e : j.at("effects")) {
    const std::string type = e.at("type").get<std::string>();
    if (type == "reverb") {
      c.effects.push_back(
          Reverb{e.at("decay_seconds").get<double>(), e.at("wet").get<double>()});
    } else if (type == "overdrive") {
      c.effects.push_back(Overdrive{e.at("gain").get<double>()});
    } else if (type == "phaser") {
      c.effects.push_back(Phaser{e.at("rate_hz").get<double>(), e.at("depth").get<double>()});
    } else if (type == "tremolo") {
      c.effects.push_back(Tremolo{e.at("rate_hz").get<double>(), e.at("depth").get<double>()});
    } else {
      throw IoError("manifest: unknown effect type " + type);
    }
  }
  if (j.contains("resample_semitones")) {
    c.resample_semitones = j.at("resample_semitones").get<double>();
  }
  return c;
}

json data_config_to_json(const DataConfig& c) {
  return json{{"pairs", c.pairs},
              {"segment_seconds", c.segment_seconds},
              {"track",
               {{"seconds", c.track.seconds},
                {"polyphony", c.track.polyphony},
                {"pitch_low", c.track.pitch_low},
                {"pitch_high", c.track.pitch_high},
                {"tempo_low_bpm", c.track.tempo_low_bpm},
                {"tempo_high_bpm", c.track.tempo_high_bpm}}},
              {"augment", c.augment},
              {"max_effects", c.max_effects},
              {"max_resample_semitones", c.max_resample_semitones},
              {"max_transpose_semitones", c.max_transpose_semitones},
              {"benchmark_cross_family", c.benchmark_cross_family}};
}

DataConfig data_config_from_json(const json& j) {
  DataConfig c;
  c.pairs = j.at("pairs").get<int>();
  c.segment_seconds = j.at("segment_seconds").get<double>();
  const auto& t = j.at("track");
  c.track.seconds = t.at("seconds").get<double>();
  c.track.polyphony = t.at("polyphony").get<int>();
  c.track.pitch_low = t.at("pitch_low").get<int>();
  c.track.pitch_high = t.at("pitch_high").get<int>();
  c.track.tempo_low_bpm = t.at("tempo_low_bpm").get<double>();
  c.track.tempo_high_bpm = t.at("tempo_high_bpm").get<double>();
  c.augment = j.at("augment").get<bool>();
  c.max_effects = j.at("max_effects").get<int>();
  c.max_resample_semitones = j.at("max_resample_semitones").get<double>();
  c.max_transpose_semitones = j.at("max_transpose_semitones").get<int>();
  c.benchmark_cross_family = j.at("benchmark_cross_family").get<bool>();
  return c;
}

std::string pair_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_%05d", id);
  return buf;
}

std::string bench_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "bench_%05d", id);
  return buf;
}

}  // namespace

Waveform fix_duration(const Waveform& w, double seconds) {
  Waveform out = w;
  out.samples.resize(static_cast<size_t>(seconds * w.sample_rate), 0.0);
  return out;
}

void save_events(const std::vector<NoteEvent>& events, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& ev : events) {
    arr.push_back({{"onset", ev.onset},
                   {"duration", ev.duration},
                   {"pitch", ev.pitch},
                   {"velocity", ev.velocity}});
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write events file: " + path.string());
  f << arr.dump() << "\n";
}

std::vector<NoteEvent> load_events(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read events file: " + path.string());
  json arr;
  try {
    f >> arr;
  } catch (const json::exception& e) {
    throw IoError("malformed events file " + path.string() + ": " + e.what());
  }
  std::vector<NoteEvent> events;
  for (const auto& j : arr) {
    events.push_back(NoteEvent{j.at("onset").get<double>(), j.at("duration").get<double>(),
                               j.at("pitch").get<int>(), j.at("velocity").get<double>()});
  }
  return events;
}

DatasetManifest build_dataset(const DataConfig& cfg, uint64_t seed,
                              const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create dataset directory: " + out_dir.string());
  }

  DatasetManifest manifest;
  manifest.config = cfg;
  manifest.seed = seed;
  const Rng base(seed);

  for (int i = 0; i < cfg.pairs; ++i) {
    // independent stream per pair
    Rng rng = base.derive(static_cast<uint64_t>(i));
    PairRecord rec;
    rec.pair_id = i;
    rec.track_seed = rng.next_u64();
    const Track track = generate_track(rec.track_seed, cfg.track);

    auto [wx, wy] = sample_segment_pair(track.events, track.seconds, rng, cfg.segment_seconds);
    rec.start_x = wx.start;
    rec.start_y = wy.start;

    // symbolic transpose of the style-encoder input: nonzero by construction
    if (cfg.max_transpose_semitones > 0) {
      const int mag = static_cast<int>(rng.uniform_int(1, cfg.max_transpose_semitones));
      rec.transpose_y = rng.uniform() < 0.5 ? -mag : mag;
    }
    std::vector<NoteEvent> events_y = transpose(wy.events, rec.transpose_y);
    if (events_y.empty()) events_y = wy.events;  // all clipped: keep untransposed

    rec.patch = cfg.augment ? reprogram(track.patch, rng) : track.patch;
    rec.patch_id = pair_stem(i) + "_patch";
    rec.chain = cfg.augment
                    ? sample_effect_chain(rng, cfg.max_effects, cfg.max_resample_semitones)
                    : EffectChain{};

    const uint64_t noise_x = rng.next_u64();
    const uint64_t noise_y = rng.next_u64();
    Waveform x = synthesize(wx.events, rec.patch, kSampleRate, noise_x);
    Waveform y = synthesize(events_y, rec.patch, kSampleRate, noise_y);
    if (rec.chain.resample_semitones) {
      x = resample_augment(x, *rec.chain.resample_semitones, cfg.segment_seconds);
      y = resample_augment(y, *rec.chain.resample_semitones, cfg.segment_seconds);
    }
    x = apply_effects(x, rec.chain);
    y = apply_effects(y, rec.chain);
    x = fix_duration(x, cfg.segment_seconds);
    y = fix_duration(y, cfg.segment_seconds);

    const std::string stem = pair_stem(i);
    rec.x_path = stem + "_x.wav";
    rec.y_path = stem + "_y.wav";
    rec.x_events_path = stem + "_x.events.json";
    rec.y_events_path = stem + "_y.events.json";
    save_wav(out_dir / rec.x_path, x);
    save_wav(out_dir / rec.y_path, y);
    save_events(wx.events, out_dir / rec.x_events_path);
    save_events(events_y, out_dir / rec.y_events_path);
    manifest.pairs.push_back(std::move(rec));
  }
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

BenchmarkManifest build_benchmark(const DataConfig& cfg, uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create benchmark directory: " + out_dir.string());
  }

  BenchmarkManifest manifest;
  manifest.config = cfg;
  manifest.seed = seed;
  const Rng base(seed);

  for (int i = 0; i < cfg.pairs; ++i) {
    Rng rng = base.derive(static_cast<uint64_t>(i) + (1ULL << 20));
    BenchmarkRow row;
    row.pair_id = i;
    row.content_seed = rng.next_u64();
    row.style_seed = rng.next_u64();
    const Track content_track = generate_track(row.content_seed, cfg.track);
    Track style_track = generate_track(row.style_seed, cfg.track);
    if (cfg.benchmark_cross_family) {
      for (int guard = 0; style_track.patch.family == content_track.patch.family && guard < 64;
           ++guard) {
        style_track.patch = sample_patch(rng);
      }
    }
    row.content_patch = content_track.patch;
    row.style_patch = style_track.patch;

    const SegmentWindow content =
        sample_segment(content_track.events, content_track.seconds, cfg.segment_seconds, rng);
    const SegmentWindow style =
        sample_segment(style_track.events, style_track.seconds, cfg.segment_seconds, rng);

    const uint64_t noise_c = rng.next_u64();
    const uint64_t noise_s = rng.next_u64();
    const uint64_t noise_t = rng.next_u64();
    const Waveform wc =
        fix_duration(synthesize(content.events, row.content_patch, kSampleRate, noise_c),
                     cfg.segment_seconds);
    const Waveform ws = fix_duration(
        synthesize(style.events, row.style_patch, kSampleRate, noise_s), cfg.segment_seconds);
    // ground truth: the content events played with the style patch
    const Waveform wt = fix_duration(
        synthesize(content.events, row.style_patch, kSampleRate, noise_t), cfg.segment_seconds);

    const std::string stem = bench_stem(i);
    row.content_path = stem + "_content.wav";
    row.style_path = stem + "_style.wav";
    row.target_path = stem + "_target.wav";
    row.content_events_path = stem + "_content.events.json";
    row.style_events_path = stem + "_style.events.json";
    save_wav(out_dir / row.content_path, wc);
    save_wav(out_dir / row.style_path, ws);
    save_wav(out_dir / row.target_path, wt);
    save_events(content.events, out_dir / row.content_events_path);
    save_events(style.events, out_dir / row.style_events_path);
    manifest.rows.push_back(std::move(row));
  }
  save_manifest(manifest, out_dir / "benchmark.jsonl");
  return manifest;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest: " + path.string());
  json header{{"kind", "dataset"}, {"seed", m.seed}, {"config", data_config_to_json(m.config)}};
  f << header.dump() << "\n";
  for (const auto& r : m.pairs) {
    json j{{"pair_id", r.pair_id},
           {"x", r.x_path},
           {"y", r.y_path},
           {"x_events", r.x_events_path},
           {"y_events", r.y_events_path},
           {"track_seed", r.track_seed},
           {"patch_id", r.patch_id},
           {"patch", patch_to_json(r.patch)},
           {"transpose_y", r.transpose_y},
           {"chain", chain_to_json(r.chain)},
           {"start_x", r.start_x},
           {"start_y", r.start_y}};
    f << j.dump() << "\n";
  }
}

DatasetManifest load_dataset_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest: " + path.string());
  DatasetManifest m;
  std::string line;
  bool have_header = false;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    if (!have_header) {
      if (j.value("kind", "") != "dataset") {
        throw IoError("manifest " + path.string() + ": expected a dataset header record");
      }
      m.seed = j.at("seed").get<uint64_t>();
      m.config = data_config_from_json(j.at("config"));
      have_header = true;
      continue;
    }
    PairRecord r;
    r.pair_id = j.at("pair_id").get<int>();
    r.x_path = j.at("x").get<std::string>();
    r.y_path = j.at("y").get<std::string>();
    r.x_events_path = j.at("x_events").get<std::string>();
    r.y_events_path = j.at("y_events").get<std::string>();
    r.track_seed = j.at("track_seed").get<uint64_t>();
    r.patch_id = j.at("patch_id").get<std::string>();
    r.patch = patch_from_json(j.at("patch"));
    r.transpose_y = j.at("transpose_y").get<int>();
    r.chain = chain_from_json(j.at("chain"));
    r.start_x = j.at("start_x").get<double>();
    r.start_y = j.at("start_y").get<double>();
    m.pairs.push_back(std::move(r));
  }
  if (!have_header) throw IoError("manifest " + path.string() + " is empty");
  return m;
}

void save_manifest(const BenchmarkManifest& m, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write manifest: " + path.string());
  json header{{"kind", "benchmark"}, {"seed", m.seed}, {"config", data_config_to_json(m.config)}};
  f << header.dump() << "\n";
  for (const auto& r : m.rows) {
    json j{{"pair_id", r.pair_id},
           {"content", r.content_path},
           {"style", r.style_path},
           {"target", r.target_path},
           {"content_events", r.content_events_path},
           {"style_events", r.style_events_path},
           {"content_patch", patch_to_json(r.content_patch)},
           {"style_patch", patch_to_json(r.style_patch)},
           {"content_seed", r.content_seed},
           {"style_seed", r.style_seed}};
    f << j.dump() << "\n";
  }
}

BenchmarkManifest load_benchmark_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read manifest: " + path.string());
  BenchmarkManifest m;
  std::string line;
  bool have_header = false;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("manifest " + path.string() + " line " + std::to_string(line_no) + ": " +
                    e.what());
    }
    if (!have_header) {
      if (j.value("kind", "") != "benchmark") {
        throw IoError("manifest " + path.string() + ": expected a benchmark header record");
      }
      m.seed = j.at("seed").get<uint64_t>();
      m.config = data_config_from_json(j.at("config"));
      have_header = true;
      continue;
    }
    BenchmarkRow r;
    r.pair_id = j.at("pair_id").get<int>();
    r.content_path = j.at("content").get<std::string>();
    r.style_path = j.at("style").get<std::string>();
    r.target_path = j.at("target").get<std::string>();
    r.content_events_path = j.at("content_events").get<std::string>();
    r.style_events_path = j.at("style_events").get<std::string>();
    r.content_patch = patch_from_json(j.at("content_patch"));
    r.style_patch = patch_from_json(j.at("style_patch"));
    r.content_seed = j.at("content_seed").get<uint64_t>();
    r.style_seed = j.at("style_seed").get<uint64_t>();
    m.rows.push_back(std::move(r));
  }
  if (!have_header) throw IoError("manifest " + path.string() + " is empty");
  return m;
}

}  // namespace vqtt::data

