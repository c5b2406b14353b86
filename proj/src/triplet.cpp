#include "vqtt/triplet.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "vqtt/dataset.hpp"
#include "vqtt/spectral.hpp"

namespace vqtt::eval {

using nlohmann::json;
using nn::Tape;
using nn::Var;

TripletModel::TripletModel(const TripletConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  fc1_ = nn::make_dense(kFeatureDim, cfg.hidden_dim, rng);
  fc2_ = nn::make_dense(cfg.hidden_dim, cfg.embedding_dim, rng);
  scaler_mean_ = Vec::Zero(kFeatureDim);
  scaler_std_ = Vec::Ones(kFeatureDim);
}

Vec TripletModel::features(const Waveform& w) {
  const Mat coeffs = spectral::mfcc(w);  // T x 12
  const long T = coeffs.rows();
  Vec out(kFeatureDim);
  const Eigen::RowVectorXd mean = coeffs.colwise().mean();
  Eigen::RowVectorXd stdev(coeffs.cols());
  for (long c = 0; c < coeffs.cols(); ++c) {
    const double var = (coeffs.col(c).array() - mean(c)).square().sum() / std::max(1L, T);
    stdev(c) = std::sqrt(var);
  }
  out.head(12) = mean.transpose();
  out.tail(12) = stdev.transpose();
  return out;
}

void TripletModel::set_scaler(const Vec& mean, const Vec& std) {
  scaler_mean_ = mean;
  scaler_std_ = std;
}

Var TripletModel::embed_graph(Tape& tape, const Var& input) const {
  Var h = nn::leaky_relu(tape, nn::dense(tape, input, const_cast<nn::DenseParams&>(fc1_)), 0.01);
  Var e = nn::dense(tape, h, const_cast<nn::DenseParams&>(fc2_));
  return nn::l2_normalize_rows(tape, e);
}

Vec TripletModel::embed_features(const Vec& feat) const {
  Mat row = ((feat - scaler_mean_).array() / scaler_std_.array()).matrix().transpose();
  Tape tape(false);
  Var out = embed_graph(tape, nn::constant(row));
  return out->value.row(0).transpose();
}

double TripletModel::distance(const Waveform& a, const Waveform& b) const {
  return (embed(a) - embed(b)).norm();
}

double TripletModel::distance_features(const Vec& a, const Vec& b) const {
  return (embed_features(a) - embed_features(b)).norm();
}

double TripletModel::fit(const Mat& features, const std::vector<std::array<int, 3>>& triplets) {
  if (triplets.empty()) throw ConfigError("triplet fit: no triplets");
  // z-score scaler from the training features
  scaler_mean_ = features.colwise().mean().transpose();
  for (long c = 0; c < features.cols(); ++c) {
    const double var =
        (features.col(c).array() - scaler_mean_(c)).square().sum() / features.rows();
    scaler_std_(c) = std::max(1e-6, std::sqrt(var));
  }
  Mat scaled = (features.rowwise() - scaler_mean_.transpose().row(0));
  scaled.array().rowwise() /= scaler_std_.transpose().row(0).array();

  nn::Adam opt({fc1_.w, fc1_.b, fc2_.w, fc2_.b}, cfg_.learning_rate);
  Rng rng(cfg_.seed + 17);
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::vector<size_t> order(triplets.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg_.batch_size)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg_.batch_size));
      const long B = static_cast<long>(end - at);
      Mat a(B, kFeatureDim), p(B, kFeatureDim), n(B, kFeatureDim);
      for (long i = 0; i < B; ++i) {
        const auto& t = triplets[order[at + static_cast<size_t>(i)]];
        a.row(i) = scaled.row(t[0]);
        p.row(i) = scaled.row(t[1]);
        n.row(i) = scaled.row(t[2]);
      }
      Tape tape(true);
      Var ea = embed_graph(tape, nn::constant(a));
      Var ep = embed_graph(tape, nn::constant(p));
      Var en = embed_graph(tape, nn::constant(n));
      Var dap = nn::sqrt_eps(tape, nn::rowwise_sqnorm(tape, nn::sub(tape, ea, ep)));
      Var dan = nn::sqrt_eps(tape, nn::rowwise_sqnorm(tape, nn::sub(tape, ea, en)));
      Var gap = nn::add_const(tape, nn::sub(tape, dap, dan), cfg_.margin);
      Var loss = nn::mean_all(tape, nn::relu(tape, gap));

      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      epoch_loss += loss->value(0, 0);
      ++batches;
    }
    last_epoch_loss = epoch_loss / std::max(1, batches);
  }
  return last_epoch_loss;
}

void TripletModel::save(const std::filesystem::path& path) const {
  auto mat_to_json = [](const Mat& m) {
    json rows = json::array();
    for (long r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (long c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  json j{{"kind", "triplet"},
         {"config",
          {{"hidden_dim", cfg_.hidden_dim},
           {"embedding_dim", cfg_.embedding_dim},
           {"margin", cfg_.margin},
           {"epochs", cfg_.epochs},
           {"batch_size", cfg_.batch_size},
           {"learning_rate", cfg_.learning_rate},
           {"seed", cfg_.seed}}},
         {"w1", mat_to_json(fc1_.w->value)},
         {"b1", mat_to_json(fc1_.b->value)},
         {"w2", mat_to_json(fc2_.w->value)},
         {"b2", mat_to_json(fc2_.b->value)},
         {"scaler_mean", mat_to_json(scaler_mean_.transpose())},
         {"scaler_std", mat_to_json(scaler_std_.transpose())}};
  std::ofstream f(path);
  if (!f) throw IoError("cannot write triplet model: " + path.string());
  f << j.dump() << "\n";
}

TripletModel TripletModel::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read triplet model: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed triplet model " + path.string() + ": " + e.what());
  }
  if (j.value("kind", "") != "triplet") {
    throw IoError("not a triplet model file: " + path.string());
  }
  auto mat_from_json = [](const json& rows) {
    const long r = static_cast<long>(rows.size());
    const long c = r > 0 ? static_cast<long>(rows.at(0).size()) : 0;
    Mat m(r, c);
    for (long i = 0; i < r; ++i) {
      for (long k = 0; k < c; ++k) m(i, k) = rows.at(i).at(k).get<double>();
    }
    return m;
  };
  TripletConfig cfg;
  const auto& jc = j.at("config");
  cfg.hidden_dim = jc.at("hidden_dim").get<int>();
  cfg.embedding_dim = jc.at("embedding_dim").get<int>();
  cfg.margin = jc.at("margin").get<double>();
  cfg.epochs = jc.at("epochs").get<int>();
  cfg.batch_size = jc.at("batch_size").get<int>();
  cfg.learning_rate = jc.at("learning_rate").get<double>();
  cfg.seed = jc.at("seed").get<uint64_t>();

  TripletModel model(cfg, 0);
  model.fc1_.w->value = mat_from_json(j.at("w1"));
  model.fc1_.b->value = mat_from_json(j.at("b1"));
  model.fc2_.w->value = mat_from_json(j.at("w2"));
  model.fc2_.b->value = mat_from_json(j.at("b2"));
  model.scaler_mean_ = mat_from_json(j.at("scaler_mean")).row(0).transpose();
  model.scaler_std_ = mat_from_json(j.at("scaler_std")).row(0).transpose();
  return model;
}

TripletModel train_triplet(const std::filesystem::path& manifest_path, const TripletConfig& cfg) {
  const auto manifest = data::load_dataset_manifest(manifest_path);
  if (manifest.pairs.size() < 50) {
    throw ConfigError("train_triplet: need at least 50 distinct tracks, got " +
                      std::to_string(manifest.pairs.size()));
  }
  const auto dir = manifest_path.parent_path();

  // feature rows: 2i = x of pair i, 2i+1 = y of pair i
  Mat features(2 * static_cast<long>(manifest.pairs.size()), TripletModel::kFeatureDim);
  for (size_t i = 0; i < manifest.pairs.size(); ++i) {
    features.row(2 * static_cast<long>(i)) =
        TripletModel::features(load_wav(dir / manifest.pairs[i].x_path)).transpose();
    features.row(2 * static_cast<long>(i) + 1) =
        TripletModel::features(load_wav(dir / manifest.pairs[i].y_path)).transpose();
  }

  Rng rng(cfg.seed);
  std::vector<std::array<int, 3>> triplets;
  const int n = static_cast<int>(manifest.pairs.size());
  for (int i = 0; i < n; ++i) {
    for (int rep = 0; rep < 4; ++rep) {
      int j = static_cast<int>(rng.uniform_int(0, n - 1));
      while (j == i) j = static_cast<int>(rng.uniform_int(0, n - 1));
      const int neg = 2 * j + static_cast<int>(rng.uniform_int(0, 1));
      // both orientations of the same-timbre pair serve as anchor/positive
      if (rep % 2 == 0) {
        triplets.push_back({2 * i, 2 * i + 1, neg});
      } else {
        triplets.push_back({2 * i + 1, 2 * i, neg});
      }
    }
  }

  TripletModel model(cfg, cfg.seed);
  model.fit(features, triplets);
  return model;
}

}  // namespace vqtt::eval

