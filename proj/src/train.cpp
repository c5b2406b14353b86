#include "vqtt/train.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"

namespace vqtt::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (beta < 0.0) throw ConfigError("train config: beta must be >= 0");
  if (learning_rate < 0.0) throw ConfigError("train config: learning_rate must be >= 0");
  if (preset != "toy" && preset != "paper") {
    throw ConfigError("train config: unknown preset '" + preset + "' (want toy or paper)");
  }
}

ModelConfig model_config_for_preset(const std::string& preset) {
  if (preset == "toy") return ModelConfig::toy();
  if (preset == "paper") return ModelConfig::paper_scale();
  throw ConfigError("unknown preset '" + preset + "'");
}

spectral::SpectralConfig spectral_config_for_preset(const std::string& preset) {
  if (preset == "toy") return spectral::SpectralConfig::toy();
  if (preset == "paper") return spectral::SpectralConfig::paper_scale();
  throw ConfigError("unknown preset '" + preset + "'");
}

StepResult train_step(Model& model, nn::Adam& opt,
                      const std::vector<std::pair<const Mat*, const Mat*>>& batch,
                      const TrainConfig& cfg) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  std::vector<const Mat*> xs, ys;
  for (const auto& [x, y] : batch) {
    xs.push_back(x);
    ys.push_back(y);
  }
  auto [xm, xshape] = pack_batch(xs);
  auto [ym, yshape] = pack_batch(ys);

  nn::Tape tape(true);
  ForwardOptions opts;
  opts.training = true;
  opts.beta = cfg.beta;
  ForwardResult res = model.forward_graph(tape, xm, xshape, ym, yshape, opts);

  StepResult out;
  out.losses.recon = res.recon->value(0, 0);
  out.losses.codebook = res.codebook_term->value(0, 0);
  out.losses.commit = res.commit_term->value(0, 0);
  out.losses.beta = cfg.beta;
  out.graph_total = res.total->value(0, 0);
  out.indices = res.indices;

  auto check_finite = [](double v, const char* name) {
    if (!std::isfinite(v)) {
      throw DivergenceError(std::string("training diverged: ") + name + " is non-finite");
    }
  };
  check_finite(out.losses.recon, "reconstruction loss");
  check_finite(out.losses.codebook, "codebook loss");
  check_finite(out.losses.commit, "commitment loss");

  opt.zero_grad();
  tape.backward(res.total);
  out.grad_norm = opt.step(cfg.grad_clip_norm);
  check_finite(out.grad_norm, "gradient norm");
  return out;
}

namespace {

void write_spec_cache(const std::filesystem::path& path, const Mat& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write spectrogram cache: " + path.string());
  const char magic[8] = {'V', 'Q', 'S', 'P', 'E', 'C', '0', '1'};
  f.write(magic, 8);
  const uint64_t rows = static_cast<uint64_t>(m.rows()), cols = static_cast<uint64_t>(m.cols());
  f.write(reinterpret_cast<const char*>(&rows), 8);
  f.write(reinterpret_cast<const char*>(&cols), 8);
  f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(8 * m.size()));
}

Mat read_spec_cache(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read spectrogram cache: " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "VQSPEC01", 8) != 0) {
    throw IoError("bad spectrogram cache file: " + path.string());
  }
  uint64_t rows = 0, cols = 0;
  f.read(reinterpret_cast<char*>(&rows), 8);
  f.read(reinterpret_cast<char*>(&cols), 8);
  Mat m(static_cast<long>(rows), static_cast<long>(cols));
  f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(8 * m.size()));
  if (!f) throw IoError("truncated spectrogram cache: " + path.string());
  return m;
}

}  // namespace

SpectrogramCache::SpectrogramCache(const std::filesystem::path& manifest_path,
                                   const spectral::SpectralConfig& frontend,
                                   const std::filesystem::path& cache_dir) {
  const auto manifest = data::load_dataset_manifest(manifest_path);
  const auto audio_dir = manifest_path.parent_path();
  std::filesystem::create_directories(cache_dir);

  auto cached_spec = [&](const std::string& wav_rel) {
    const auto cache_path = cache_dir / (std::filesystem::path(wav_rel).stem().string() + ".spec");
    if (std::filesystem::exists(cache_path)) return read_spec_cache(cache_path);
    const Waveform w = load_wav(audio_dir / wav_rel);
    const Mat frames = spectral::compress(spectral::stft(w, frontend)).frames;
    write_spec_cache(cache_path, frames);
    return frames;
  };
  for (const auto& rec : manifest.pairs) {
    x_.push_back(cached_spec(rec.x_path));
    y_.push_back(cached_spec(rec.y_path));
  }
  if (x_.empty()) throw ConfigError("training manifest has no pairs: " + manifest_path.string());
}

namespace {

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"batch_size", c.batch_size},
              {"beta", c.beta},
              {"seed", c.seed},
              {"preset", c.preset},
              {"grad_clip_norm", c.grad_clip_norm}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.beta = j.at("beta").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.preset = j.at("preset").get<std::string>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  return c;
}

json stats_to_json(const EpochStats& s) {
  return json{{"epoch", s.epoch},     {"recon", s.recon},
              {"codebook", s.codebook}, {"commit", s.commit},
              {"total", s.total},     {"used_count", s.used_count},
              {"perplexity", s.perplexity}};
}

EpochStats stats_from_json(const json& j) {
  EpochStats s;
  s.epoch = j.at("epoch").get<int>();
  s.recon = j.at("recon").get<double>();
  s.codebook = j.at("codebook").get<double>();
  s.commit = j.at("commit").get<double>();
  s.total = j.at("total").get<double>();
  s.used_count = j.at("used_count").get<int>();
  s.perplexity = j.at("perplexity").get<double>();
  return s;
}

void write_tensor(std::ofstream& f, const std::string& name, const Mat& m) {
  const uint32_t name_len = static_cast<uint32_t>(name.size());
  f.write(reinterpret_cast<const char*>(&name_len), 4);
  f.write(name.data(), name_len);
  const uint64_t rows = static_cast<uint64_t>(m.rows()), cols = static_cast<uint64_t>(m.cols());
  f.write(reinterpret_cast<const char*>(&rows), 8);
  f.write(reinterpret_cast<const char*>(&cols), 8);
  f.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(8 * m.size()));
}

std::pair<std::string, Mat> read_tensor(std::ifstream& f, const std::string& context) {
  uint32_t name_len = 0;
  f.read(reinterpret_cast<char*>(&name_len), 4);
  if (!f || name_len > 4096) throw IoError("checkpoint truncated reading a tensor name " + context);
  std::string name(name_len, '\0');
  f.read(name.data(), name_len);
  uint64_t rows = 0, cols = 0;
  f.read(reinterpret_cast<char*>(&rows), 8);
  f.read(reinterpret_cast<char*>(&cols), 8);
  if (!f || rows > (1ULL << 32) || cols > (1ULL << 32)) {
    throw IoError("checkpoint truncated reading tensor header for '" + name + "'");
  }
  Mat m(static_cast<long>(rows), static_cast<long>(cols));
  f.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(8 * m.size()));
  if (!f) throw IoError("checkpoint truncated reading tensor data for '" + name + "'");
  return {name, std::move(m)};
}

constexpr char kCheckpointMagic[8] = {'V', 'Q', 'T', 'T', 'C', 'K', 'P', 'T'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model& model, const TrainConfig& cfg,
                     int epoch, const std::vector<EpochStats>& history, nn::Adam* opt) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint: " + path.string());
    f.write(kCheckpointMagic, 8);
    const uint32_t version = kCheckpointVersion;
    f.write(reinterpret_cast<const char*>(&version), 4);

    json header{{"train_config", train_config_to_json(cfg)},
                {"epoch", epoch},
                {"model_config",
                 {{"channels", model.config().channels},
                  {"freq_bins", model.config().freq_bins},
                  {"codebook_size", model.config().codebook_size},
                  {"downsample_factor", model.config().downsample_factor},
                  {"leaky_relu_slope", model.config().leaky_relu_slope},
                  {"batchnorm_eps", model.config().batchnorm_eps}}},
                {"frontend",
                 {{"sample_rate", model.frontend().sample_rate},
                  {"fft_size", model.frontend().fft_size},
                  {"hop_seconds", model.frontend().hop_seconds}}},
                {"adam_steps", opt ? opt->steps_taken() : 0},
                {"has_adam", opt != nullptr}};
    json hist = json::array();
    for (const auto& s : history) hist.push_back(stats_to_json(s));
    header["loss_history"] = hist;
    const std::string header_str = header.dump();
    const uint64_t header_len = header_str.size();
    f.write(reinterpret_cast<const char*>(&header_len), 8);
    f.write(header_str.data(), static_cast<std::streamsize>(header_len));

    auto reg = model.registry();
    uint64_t count = reg.params.size() + reg.buffers.size();
    if (opt) count += 2 * opt->params().size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, v] : reg.params) write_tensor(f, name, v->value);
    for (const auto& [name, buf] : reg.buffers) write_tensor(f, name, *buf);
    if (opt) {
      for (size_t i = 0; i < opt->params().size(); ++i) {
        write_tensor(f, "adam.m." + std::to_string(i), opt->first_moments()[i]);
        write_tensor(f, "adam.v." + std::to_string(i), opt->second_moments()[i]);
      }
    }
    if (!f) throw IoError("short write on checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);  // atomic replace
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  uint32_t version = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  if (!f || version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " +
                  path.string() + " (this build reads version " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  uint64_t header_len = 0;
  f.read(reinterpret_cast<char*>(&header_len), 8);
  if (!f || header_len > (1ULL << 24)) throw IoError("checkpoint truncated reading the header");
  std::string header_str(header_len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw IoError("checkpoint truncated reading the header");
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }

  LoadedCheckpoint out;
  out.config = train_config_from_json(header.at("train_config"));
  out.epoch = header.at("epoch").get<int>();
  for (const auto& j : header.at("loss_history")) out.history.push_back(stats_from_json(j));
  out.adam_steps = header.at("adam_steps").get<long>();

  ModelConfig mc;
  const auto& jm = header.at("model_config");
  mc.channels = jm.at("channels").get<int>();
  mc.freq_bins = jm.at("freq_bins").get<int>();
  mc.codebook_size = jm.at("codebook_size").get<int>();
  mc.downsample_factor = jm.at("downsample_factor").get<int>();
  mc.leaky_relu_slope = jm.at("leaky_relu_slope").get<double>();
  mc.batchnorm_eps = jm.at("batchnorm_eps").get<double>();
  spectral::SpectralConfig fe;
  const auto& jf = header.at("frontend");
  fe.sample_rate = jf.at("sample_rate").get<int>();
  fe.fft_size = jf.at("fft_size").get<int>();
  fe.hop_seconds = jf.at("hop_seconds").get<double>();

  out.model = std::make_unique<Model>(mc, fe, 0);

  uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  if (!f) throw IoError("checkpoint truncated reading the tensor count");

  auto reg = out.model->registry();
  std::map<std::string, nn::Var> params;
  std::map<std::string, Mat*> buffers;
  for (auto& [name, v] : reg.params) params[name] = v;
  for (auto& [name, b] : reg.buffers) buffers[name] = b;
  const size_t n_trainable = out.model->trainable().size();
  out.adam_m.resize(n_trainable);
  out.adam_v.resize(n_trainable);
  std::set<std::string> seen;

  for (uint64_t i = 0; i < count; ++i) {
    auto [name, m] = read_tensor(f, "(index " + std::to_string(i) + ")");
    seen.insert(name);
    if (auto it = params.find(name); it != params.end()) {
      if (it->second->value.rows() != m.rows() || it->second->value.cols() != m.cols()) {
        throw IoError("checkpoint tensor '" + name + "' has unexpected shape");
      }
      it->second->value = std::move(m);
    } else if (auto bt = buffers.find(name); bt != buffers.end()) {
      *bt->second = std::move(m);
    } else if (name.rfind("adam.m.", 0) == 0) {
      out.adam_m[static_cast<size_t>(std::stoul(name.substr(7)))] = std::move(m);
    } else if (name.rfind("adam.v.", 0) == 0) {
      out.adam_v[static_cast<size_t>(std::stoul(name.substr(7)))] = std::move(m);
    } else {
      throw IoError("checkpoint contains unknown tensor '" + name + "'");
    }
  }
  for (const auto& [name, v] : params) {
    if (!seen.count(name)) throw IoError("checkpoint is missing tensor '" + name + "'");
  }
  if (!header.at("has_adam").get<bool>()) {
    out.adam_m.clear();
    out.adam_v.clear();
  }
  return out;
}

FitResult fit(const std::filesystem::path& manifest_path, const TrainConfig& cfg,
              const std::filesystem::path& out_dir, const std::filesystem::path& resume) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto frontend = spectral_config_for_preset(cfg.preset);
  const SpectrogramCache cache(manifest_path, frontend, out_dir / "cache");

  std::unique_ptr<Model> model;
  std::vector<EpochStats> history;
  int start_epoch = 0;
  std::unique_ptr<nn::Adam> opt;
  if (!resume.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(resume);
    model = std::move(ckpt.model);
    history = std::move(ckpt.history);
    start_epoch = ckpt.epoch;
    opt = std::make_unique<nn::Adam>(model->trainable(), cfg.learning_rate, cfg.adam_beta1,
                                     cfg.adam_beta2, cfg.adam_eps);
    if (!ckpt.adam_m.empty()) {
      opt->first_moments() = std::move(ckpt.adam_m);
      opt->second_moments() = std::move(ckpt.adam_v);
      opt->set_steps_taken(ckpt.adam_steps);
    }
  } else {
    model = std::make_unique<Model>(model_config_for_preset(cfg.preset), frontend, cfg.seed);
    opt = std::make_unique<nn::Adam>(model->trainable(), cfg.learning_rate, cfg.adam_beta1,
                                     cfg.adam_beta2, cfg.adam_eps);
  }

  std::ofstream log(out_dir / "train_log.jsonl", start_epoch > 0 ? std::ios::app : std::ios::out);
  const Rng base(cfg.seed);

  FitResult result;
  double best_recon = std::numeric_limits<double>::infinity();
  for (const auto& s : history) best_recon = std::min(best_recon, s.recon);

  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = base.derive(0xE70C0000ULL + static_cast<uint64_t>(epoch));
    std::vector<size_t> order(cache.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    std::vector<std::vector<int>> epoch_codes;
    int steps = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      std::vector<std::pair<const Mat*, const Mat*>> batch;
      for (size_t i = at; i < std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
           ++i) {
        batch.emplace_back(&cache.x(order[i]), &cache.y(order[i]));
      }
      const StepResult step = train_step(*model, *opt, batch, cfg);
      epoch_codes.push_back(step.indices);
      const auto batch_stats =
          vq::codebook_stats({step.indices}, model->config().codebook_size);
      ++steps;
      stats.recon += step.losses.recon;
      stats.codebook += step.losses.codebook;
      stats.commit += step.losses.commit;
      stats.total += step.graph_total;

      json rec{{"epoch", epoch},
               {"step", steps},
               {"recon", step.losses.recon},
               {"codebook", step.losses.codebook},
               {"commit", step.losses.commit},
               {"total", step.graph_total},
               {"perplexity", batch_stats.perplexity},
               {"grad_norm", step.grad_norm}};
      log << rec.dump() << "\n";
    }
    stats.recon /= steps;
    stats.codebook /= steps;
    stats.commit /= steps;
    stats.total /= steps;
    const auto usage = vq::codebook_stats(epoch_codes, model->config().codebook_size);
    stats.used_count = usage.used_count;
    stats.perplexity = usage.perplexity;
    history.push_back(stats);
    log.flush();

    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.bin", epoch);
    const auto epoch_path = out_dir / name;
    save_checkpoint(epoch_path, *model, cfg, epoch, history, opt.get());
    result.last_checkpoint = epoch_path;
    if (stats.recon < best_recon) {
      best_recon = stats.recon;
      std::filesystem::copy_file(epoch_path, out_dir / "best.bin",
                                 std::filesystem::copy_options::overwrite_existing);
    }
  }
  result.best_checkpoint = out_dir / "best.bin";
  if (!std::filesystem::exists(result.best_checkpoint) &&
      !result.last_checkpoint.empty()) {
    std::filesystem::copy_file(result.last_checkpoint, result.best_checkpoint);
  }
  result.history = std::move(history);
  return result;
}

}  // namespace vqtt::train

