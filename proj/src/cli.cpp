#include "vqtt/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "vqtt/config.hpp"

namespace vqtt::cli {

namespace {

int log_level() {
  const char* env = std::getenv("VQTT_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "quiet" || v == "0") return 0;
  if (v == "debug" || v == "2") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::fprintf(stderr, "[vqtt] %s\n", msg.c_str());
}

ProjectConfig load_config(const std::string& config_flag) {
  std::string path = config_flag;
  if (path.empty()) {
    if (const char* env = std::getenv("VQTT_CONFIG")) path = env;
  }
  if (path.empty()) return ProjectConfig::defaults();
  return ProjectConfig::from_file(path);
}

struct PrepareArgs {
  std::string config, out;
  int pairs = -1;
  uint64_t seed = 0;
  bool seed_set = false;
  bool benchmark = false;
};

int cmd_prepare(const PrepareArgs& args) {
  ProjectConfig cfg = load_config(args.config);
  data::DataConfig dc = cfg.data;
  if (args.pairs >= 0) dc.pairs = args.pairs;
  const uint64_t seed = args.seed_set ? args.seed : cfg.train.seed;

  if (args.benchmark) {
    dc.augment = false;  // the benchmark protocol applies no augmentation
    const auto manifest = data::build_benchmark(dc, seed, args.out);
    log_info("prepared benchmark: " + std::to_string(manifest.rows.size()) + " rows in " +
             args.out);
    std::printf("benchmark rows: %zu\nmanifest: %s\n", manifest.rows.size(),
                (std::filesystem::path(args.out) / "benchmark.jsonl").c_str());
  } else {
    const auto manifest = data::build_dataset(dc, seed, args.out);
    size_t files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(args.out)) {
      if (entry.path().extension() == ".wav") ++files;
    }
    log_info("prepared dataset: " + std::to_string(manifest.pairs.size()) + " pairs in " +
             args.out);
    std::printf("pairs: %zu\naudio files: %zu\nmanifest: %s\n", manifest.pairs.size(), files,
                (std::filesystem::path(args.out) / "manifest.jsonl").c_str());
  }
  return 0;
}

struct TrainArgs {
  std::string config, data, out, resume;
  int epochs = -1;
  uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_train(const TrainArgs& args) {
  ProjectConfig cfg = load_config(args.config);
  train::TrainConfig tc = cfg.train;
  tc.preset = cfg.preset;
  if (args.epochs > 0) tc.epochs = args.epochs;
  if (args.seed_set) tc.seed = args.seed;

  const auto result = train::fit(args.data, tc, args.out,
                                 args.resume.empty() ? std::filesystem::path{}
                                                     : std::filesystem::path(args.resume));
  for (const auto& s : result.history) {
    std::printf("epoch %d: recon %.6f codebook %.6f commit %.6f total %.6f used %d perplexity %.2f\n",
                s.epoch, s.recon, s.codebook, s.commit, s.total, s.used_count, s.perplexity);
  }
  std::printf("best checkpoint: %s\n", result.best_checkpoint.c_str());
  return 0;
}

struct TransferArgs {
  std::string ckpt, content, style, out;
  int gl_iters = 60;
  uint64_t seed = 0;
};

int cmd_transfer(const TransferArgs& args) {
  auto loaded = train::load_checkpoint(args.ckpt);
  const Waveform content = load_wav(args.content);
  const Waveform style = load_wav(args.style);
  Model::TransferOptions opts;
  opts.griffin_lim_iterations = args.gl_iters;
  opts.seed = args.seed;
  const Waveform out = loaded.model->transfer(content, style, opts);
  save_wav(args.out, out);
  log_info("transfer written to " + args.out);
  std::printf("output: %s (%.2f s)\n", args.out.c_str(), out.seconds());
  return 0;
}

struct EvalArgs {
  std::string ckpt, outputs, manifest, mode = "artificial", report;
  std::string triplet, triplet_data, triplet_out;
  uint64_t seed = 0;
  std::string config;
};

int cmd_eval(const EvalArgs& args) {
  ProjectConfig cfg = load_config(args.config);
  const auto mode = eval::benchmark_mode_from_name(args.mode);

  // the timbre metric needs a fitted triplet model
  std::unique_ptr<eval::TripletModel> timbre;
  if (!args.triplet.empty()) {
    timbre = std::make_unique<eval::TripletModel>(eval::TripletModel::load(args.triplet));
  } else if (!args.triplet_data.empty()) {
    eval::TripletConfig tc;
    tc.seed = args.seed;
    log_info("fitting the triplet timbre metric on " + args.triplet_data);
    timbre = std::make_unique<eval::TripletModel>(eval::train_triplet(args.triplet_data, tc));
    if (!args.triplet_out.empty()) {
      timbre->save(args.triplet_out);
      log_info("triplet model saved to " + args.triplet_out);
    }
  } else {
    throw ConfigError("eval needs --triplet <model.json> or --triplet-data <manifest>");
  }

  if (!args.ckpt.empty()) {
    auto loaded = train::load_checkpoint(args.ckpt);
    const auto manifest = data::load_benchmark_manifest(args.manifest);
    const auto data_dir = std::filesystem::path(args.manifest).parent_path();
    std::filesystem::create_directories(args.outputs);
    log_info("generating " + std::to_string(manifest.rows.size()) + " outputs with " + args.ckpt);
    for (const auto& row : manifest.rows) {
      const Waveform content = load_wav(data_dir / row.content_path);
      const Waveform style = load_wav(data_dir / row.style_path);
      Model::TransferOptions opts;
      opts.griffin_lim_iterations = cfg.eval.gl_iterations;
      opts.seed = args.seed;
      const Waveform out = loaded.model->transfer(content, style, opts);
      save_wav(std::filesystem::path(args.outputs) / eval::output_name_for_row(row.pair_id),
               out);
    }
  }

  eval::EvalConfig ec;
  ec.mode = mode;
  ec.mel_bands = cfg.eval.mel_bands;
  ec.force_tracker = cfg.eval.force_tracker;
  ec.tracker.frame_rate = cfg.eval.pitch_frame_rate;
  ec.tracker.max_polyphony = cfg.eval.max_polyphony;
  const auto report = eval::run_benchmark(args.outputs, args.manifest, *timbre, ec);

  write_report_table(report, args.report);
  write_report_jsonl(report, args.report + ".jsonl");
  std::ifstream table(args.report);
  std::string text((std::istreambuf_iterator<char>(table)), std::istreambuf_iterator<char>());
  std::printf("%s", text.c_str());
  std::printf("report: %s (+ .jsonl)\n", args.report.c_str());
  return 0;
}

struct DiagnoseArgs {
  std::string ckpt, data, report;
};

int cmd_diagnose(const DiagnoseArgs& args) {
  auto loaded = train::load_checkpoint(args.ckpt);
  const auto manifest = data::load_dataset_manifest(args.data);
  const auto dir = std::filesystem::path(args.data).parent_path();

  std::vector<std::vector<int>> histories;
  for (const auto& rec : manifest.pairs) {
    const Waveform x = load_wav(dir / rec.x_path);
    const auto spec = spectral::compress(spectral::stft(x, loaded.model->frontend()));
    const auto codes = loaded.model->quantize_latent(loaded.model->content_encode(spec));
    histories.push_back(codes.indices);
  }
  const auto stats = vq::codebook_stats(histories, loaded.model->config().codebook_size);
  const double latent_fps =
      1.0 / loaded.model->frontend().hop_seconds / loaded.model->config().downsample_factor;

  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "codebook size: %d\n", loaded.model->config().codebook_size);
  out += line;
  std::snprintf(line, sizeof(line), "codes used: %d\n", stats.used_count);
  out += line;
  std::snprintf(line, sizeof(line), "perplexity: %.3f\n", stats.perplexity);
  out += line;
  std::snprintf(line, sizeof(line), "latent frames/s: %.3f\n", latent_fps);
  out += line;
  out += "bits per beat:\n";
  for (double tempo : {60.0, 120.0, 240.0}) {
    std::snprintf(line, sizeof(line), "  %3.0f bpm: %.2f\n", tempo,
                  vq::bits_per_beat(tempo, stats.used_count, latent_fps));
    out += line;
  }
  std::printf("%s", out.c_str());
  if (!args.report.empty()) {
    std::ofstream f(args.report);
    if (!f) throw IoError("cannot write report: " + args.report);
    f << out;
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"One-shot musical timbre transfer toolkit"};
  app.require_subcommand(1);

  PrepareArgs prepare;
  auto* prep = app.add_subcommand("prepare", "Synthesize a self-supervised pair dataset");
  prep->add_option("--config", prepare.config, "Project config JSON (or $VQTT_CONFIG)");
  prep->add_option("--out", prepare.out, "Output directory")->required();
  prep->add_option("--pairs", prepare.pairs, "Number of pairs to generate");
  prep->add_option("--seed", prepare.seed, "Generator seed")
      ->each([&](const std::string&) { prepare.seed_set = true; });
  prep->add_flag("--benchmark", prepare.benchmark,
                 "Build a content/style/target benchmark instead of a training set");

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train the timbre-transfer model");
  tr->add_option("--config", train_args.config, "Project config JSON");
  tr->add_option("--data", train_args.data, "Dataset manifest")->required();
  tr->add_option("--out", train_args.out, "Checkpoint directory")->required();
  tr->add_option("--resume", train_args.resume, "Checkpoint to resume from");
  tr->add_option("--epochs", train_args.epochs, "Override the epoch count");
  tr->add_option("--seed", train_args.seed, "Training seed")
      ->each([&](const std::string&) { train_args.seed_set = true; });

  TransferArgs transfer;
  auto* tf = app.add_subcommand("transfer", "Apply one recording's timbre to another's content");
  tf->add_option("--ckpt", transfer.ckpt, "Model checkpoint")->required();
  tf->add_option("--content", transfer.content, "Content input WAV")->required();
  tf->add_option("--style", transfer.style, "Style input WAV")->required();
  tf->add_option("--out", transfer.out, "Output WAV")->required();
  tf->add_option("--gl-iters", transfer.gl_iters, "Griffin-Lim iterations");
  tf->add_option("--seed", transfer.seed, "Phase-initialization seed");

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "Run the objective benchmark on system outputs");
  ev->add_option("--config", eval_args.config, "Project config JSON");
  ev->add_option("--ckpt", eval_args.ckpt, "Generate outputs with this checkpoint first");
  ev->add_option("--outputs", eval_args.outputs, "System outputs directory")->required();
  ev->add_option("--manifest", eval_args.manifest, "Benchmark manifest")->required();
  ev->add_option("--mode", eval_args.mode, "artificial | real");
  ev->add_option("--report", eval_args.report, "Report path (table; .jsonl appended)")
      ->required();
  ev->add_option("--triplet", eval_args.triplet, "Fitted triplet timbre model");
  ev->add_option("--triplet-data", eval_args.triplet_data,
                 "Pair manifest to fit the timbre metric on");
  ev->add_option("--triplet-out", eval_args.triplet_out, "Where to save the fitted metric");
  ev->add_option("--seed", eval_args.seed, "Seed for metric fitting and generation");

  DiagnoseArgs diag;
  auto* dg = app.add_subcommand("diagnose", "Codebook usage and bits-per-beat report");
  dg->add_option("--ckpt", diag.ckpt, "Model checkpoint")->required();
  dg->add_option("--data", diag.data, "Dataset manifest to encode")->required();
  dg->add_option("--report", diag.report, "Optional report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // 0 for --help, 1-ish codes otherwise
  }

  try {
    if (prep->parsed()) return cmd_prepare(prepare);
    if (tr->parsed()) return cmd_train(train_args);
    if (tf->parsed()) return cmd_transfer(transfer);
    if (ev->parsed()) return cmd_eval(eval_args);
    if (dg->parsed()) return cmd_diagnose(diag);
    std::fprintf(stderr, "error: no subcommand\n");
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
}

}  // namespace vqtt::cli

