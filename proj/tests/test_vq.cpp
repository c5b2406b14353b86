#include "vqtt/vq.hpp"

#include <cmath>
#include <set>

#include "doctest.h"
#include "vqtt/rng.hpp"

using namespace vqtt;
using namespace vqtt::vq;
using vqtt::nn::Tape;
using vqtt::nn::Var;

namespace {

Mat random_mat(long r, long c, Rng& rng, double scale = 1.0) {
  return Mat::NullaryExpr(r, c, [&] { return scale * rng.uniform(-1.0, 1.0); });
}

// Brute-force nearest neighbour, written independently of quantize().
int nearest_code(const Mat& codebook, const Eigen::RowVectorXd& x) {
  int best = 0;
  double best_d = (x - codebook.row(0)).squaredNorm();
  for (long j = 1; j < codebook.rows(); ++j) {
    const double d = (x - codebook.row(j)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("vq") {

TEST_CASE("quantize picks the nearest code") {
  Mat cb(2, 2);
  cb << 0, 0, 1, 1;
  Mat latent(1, 2);
  latent << 0.2, 0.1;
  const auto codes = quantize(latent, cb);
  CHECK(codes.indices[0] == 0);
  CHECK((codes.quantized.row(0) - cb.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quantize of an exact codebook row has zero error") {
  Rng rng(3);
  Mat cb = random_mat(8, 4, rng);
  Mat latent = cb.row(5);
  const auto codes = quantize(latent, cb);
  CHECK(codes.indices[0] == 5);
  CHECK((codes.quantized - latent).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("quantize breaks ties toward the lowest index") {
  Mat cb(2, 2);
  cb << 0, 0, 1, 1;
  Mat latent(1, 2);
  latent << 0.5, 0.5;
  CHECK(quantize(latent, cb).indices[0] == 0);
}

TEST_CASE("quantize rejects dimension mismatch") {
  Mat cb(2, 3);
  Mat latent(1, 2);
  CHECK_THROWS_AS(quantize(latent, cb), ShapeError);
}

TEST_CASE("quantize optimality and idempotence on random instances") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const long K = rng.uniform_int(1, 32);
    const long D = rng.uniform_int(1, 8);
    const long L = rng.uniform_int(1, 20);
    const Mat cb = random_mat(K, D, rng);
    const Mat latent = random_mat(L, D, rng);
    const auto codes = quantize(latent, cb);
    for (long i = 0; i < L; ++i) {
      CHECK(codes.indices[static_cast<size_t>(i)] == nearest_code(cb, latent.row(i)));
    }
    const auto again = quantize(codes.quantized, cb);
    CHECK(again.indices == codes.indices);
  }
}

TEST_CASE("vq_losses values") {
  Mat cb(2, 2);
  cb << 0, 0, 1, 1;

  SUBCASE("zero residual when latent rows sit on codebook rows") {
    Mat latent(2, 2);
    latent << 0, 0, 1, 1;
    const auto lb = vq_losses(latent, quantize(latent, cb), 0.25);
    CHECK(lb.codebook == 0.0);
    CHECK(lb.commit == 0.0);
  }

  SUBCASE("hand-computed mean squared residual") {
    Mat latent(1, 2);
    latent << 0.2, 0.1;
    const auto lb = vq_losses(latent, quantize(latent, cb), 0.25);
    CHECK(lb.commit == doctest::Approx(0.025).epsilon(1e-12));  // (0.04 + 0.01)/2
    CHECK(lb.codebook == lb.commit);
  }

  SUBCASE("codebook always equals commit in value") {
    Rng rng(7);
    for (int i = 0; i < 20; ++i) {
      const Mat latent = random_mat(6, 3, rng);
      const Mat book = random_mat(5, 3, rng);
      const auto lb = vq_losses(latent, quantize(latent, book), 0.5);
      CHECK(lb.codebook == lb.commit);
    }
  }
}

TEST_CASE("total_loss arithmetic") {
  LossBreakdown lb;
  lb.recon = 1.0;
  lb.codebook = 0.5;
  lb.commit = 0.5;
  lb.beta = 0.25;
  CHECK(total_loss(lb) == doctest::Approx(1.625).epsilon(1e-15));
  lb.beta = 0.0;
  CHECK(total_loss(lb) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(total_loss(LossBreakdown{}) == 0.0);
}

TEST_CASE("straight_through forwards codes and passes gradient to the latent") {
  Rng rng(11);
  Mat cb = random_mat(4, 3, rng);
  Var latent = nn::parameter(random_mat(5, 3, rng));
  Var codebook_var = nn::parameter(cb);
  const auto codes = quantize(latent->value, codebook_var->value);

  Tape tape(true);
  Var st = straight_through(tape, latent, codes);
  CHECK((st->value - codes.quantized).cwiseAbs().maxCoeff() == 0.0);

  // downstream loss = sum of outputs -> d/d latent = 1 everywhere
  Var loss = nn::scale(tape, nn::mean_all(tape, st), static_cast<double>(st->value.size()));
  latent->ensure_grad();
  codebook_var->ensure_grad();
  tape.backward(loss);
  CHECK((latent->grad.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(codebook_var->grad.cwiseAbs().maxCoeff() == 0.0);  // no grad through this path
}

TEST_CASE("vq loss routing: codebook term moves codebook, commit term moves encoder") {
  Rng rng(13);
  Var latent = nn::parameter(random_mat(6, 3, rng));
  Var codebook_var = nn::parameter(random_mat(4, 3, rng));
  const auto codes = quantize(latent->value, codebook_var->value);

  SUBCASE("codebook term") {
    Tape tape(true);
    auto losses = vq_loss_vars(tape, latent, codebook_var, codes.indices);
    latent->ensure_grad();
    codebook_var->ensure_grad();
    tape.backward(losses.codebook_term);
    CHECK(codebook_var->grad.cwiseAbs().maxCoeff() > 0.0);
    CHECK(latent->grad.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("commit term") {
    Tape tape(true);
    auto losses = vq_loss_vars(tape, latent, codebook_var, codes.indices);
    latent->ensure_grad();
    codebook_var->ensure_grad();
    tape.backward(losses.commit_term);
    CHECK(latent->grad.cwiseAbs().maxCoeff() > 0.0);
    CHECK(codebook_var->grad.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("terms are equal in value") {
    Tape tape(false);
    auto losses = vq_loss_vars(tape, latent, codebook_var, codes.indices);
    CHECK(losses.codebook_term->value(0, 0) == losses.commit_term->value(0, 0));
  }
}

// Tiny encoder -> VQ -> decoder pipeline: analytic total-loss gradients vs
// central differences, straight-through active (D=4, K=8, L=3).
//
// The straight-through estimator differentiates the surrogate in which the
// quantization offset (quantized - latent) and the assignments are held fixed
// at the probe point; the finite-difference evaluations therefore freeze both,
// while the analytic gradient comes from the production graph.
TEST_CASE("vq gradient fidelity against finite differences") {
  Rng rng(23);
  const long L = 3, D = 4, K = 8, IN = 5;
  nn::DenseParams enc = nn::make_dense(IN, D, rng);
  nn::DenseParams dec = nn::make_dense(D, IN, rng);
  Var codebook_var = nn::parameter(random_mat(K, D, rng));
  const Mat input = random_mat(L, IN, rng);
  const Mat target = random_mat(L, IN, rng);
  const double beta = 0.25;

  // Production graph: live quantization + straight-through.
  auto build_live = [&](Tape& t) -> Var {
    Var x = nn::constant(input);
    Var latent = nn::dense(t, x, enc);
    const auto codes = quantize(latent->value, codebook_var->value);
    Var st = straight_through(t, latent, codes);
    Var out = nn::dense(t, st, dec);
    Var recon = nn::mse(t, out, nn::constant(target));
    auto losses = vq_loss_vars(t, latent, codebook_var, codes.indices);
    Var total = nn::add(t, recon, losses.codebook_term);
    return nn::add(t, total, nn::scale(t, losses.commit_term, beta));
  };

  // Frozen discrete parts for the finite-difference evaluations.
  Tape base(false);
  Var latent0 = nn::dense(base, nn::constant(input), enc);
  const auto codes0 = quantize(latent0->value, codebook_var->value);
  const Mat offset0 = codes0.quantized - latent0->value;
  const auto indices0 = codes0.indices;

  // Each stop-gradient side becomes a constant captured at the probe point:
  // codebook term sees live codebook rows against the frozen latent, commit
  // term sees the live latent against frozen codebook rows.
  auto build_frozen = [&](Tape& t) -> Var {
    Var x = nn::constant(input);
    Var latent = nn::dense(t, x, enc);
    Var st = nn::add(t, latent, nn::constant(offset0));
    Var out = nn::dense(t, st, dec);
    Var recon = nn::mse(t, out, nn::constant(target));
    Var gathered = nn::gather_rows(t, codebook_var, indices0);
    Var cbk = nn::mse(t, gathered, nn::constant(latent0->value));
    Var cmt = nn::mse(t, latent, nn::constant(codes0.quantized));
    Var total = nn::add(t, recon, cbk);
    return nn::add(t, total, nn::scale(t, cmt, beta));
  };

  const std::vector<Var> params = {enc.w, enc.b, dec.w, dec.b, codebook_var};
  Tape tape(true);
  Var loss = build_live(tape);
  {
    Tape probe(false);
    CHECK(build_frozen(probe)->value(0, 0) == doctest::Approx(loss->value(0, 0)).epsilon(1e-12));
  }
  for (auto& p : params) {
    p->ensure_grad();
    p->grad.setZero();
  }
  tape.backward(loss);

  const double h = 1e-5;
  for (const auto& p : params) {
    for (long i = 0; i < p->value.rows(); ++i) {
      for (long j = 0; j < p->value.cols(); ++j) {
        const double orig = p->value(i, j);
        p->value(i, j) = orig + h;
        Tape f1(false);
        const double lp = build_frozen(f1)->value(0, 0);
        p->value(i, j) = orig - h;
        Tape f2(false);
        const double lm = build_frozen(f2)->value(0, 0);
        p->value(i, j) = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = p->grad(i, j);
        CHECK(std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)}) < 1e-4);
      }
    }
  }
}

TEST_CASE("reconstruction loss alone leaves the codebook untouched") {
  Rng rng(29);
  Var latent = nn::parameter(random_mat(5, 4, rng));
  Var codebook_var = nn::parameter(random_mat(8, 4, rng));
  nn::DenseParams dec = nn::make_dense(4, 6, rng);
  const auto codes = quantize(latent->value, codebook_var->value);

  Tape tape(true);
  Var st = straight_through(tape, latent, codes);
  Var out = nn::dense(tape, st, dec);
  Var recon = nn::mse(tape, out, nn::constant(Mat::Zero(5, 6)));
  latent->ensure_grad();
  codebook_var->ensure_grad();
  tape.backward(recon);
  CHECK(codebook_var->grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(latent->grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("codebook_stats") {
  SUBCASE("all identical codes") {
    const auto stats = codebook_stats({{3, 3, 3, 3}}, 8);
    CHECK(stats.used_count == 1);
    CHECK(stats.perplexity == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("uniform usage has perplexity K") {
    std::vector<int> h;
    for (int k = 0; k < 16; ++k) h.push_back(k);
    const auto stats = codebook_stats({h}, 16);
    CHECK(stats.used_count == 16);
    CHECK(stats.perplexity == doctest::Approx(16.0).epsilon(1e-9));
  }
  SUBCASE("matches a brute-force entropy computation") {
    Rng rng(31);
    std::vector<std::vector<int>> histories(3);
    std::vector<long> counts(10, 0);
    long total = 0;
    for (auto& h : histories) {
      for (int i = 0; i < 50; ++i) {
        const int c = static_cast<int>(rng.uniform_int(0, 9));
        h.push_back(c);
        ++counts[static_cast<size_t>(c)];
        ++total;
      }
    }
    double entropy = 0.0;
    std::set<int> distinct;
    for (size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] == 0) continue;
      distinct.insert(static_cast<int>(k));
      const double p = static_cast<double>(counts[k]) / total;
      entropy -= p * std::log(p);
    }
    const auto stats = codebook_stats(histories, 10);
    CHECK(stats.used_count == static_cast<int>(distinct.size()));
    CHECK(stats.perplexity == doctest::Approx(std::exp(entropy)).epsilon(1e-12));
    CHECK(stats.perplexity >= 1.0);
    CHECK(stats.perplexity <= 10.0);
  }
  SUBCASE("empty input is an error") {
    CHECK_THROWS_AS(codebook_stats({}, 4), ConfigError);
    CHECK_THROWS_AS(codebook_stats({{}}, 4), ConfigError);
  }
}

TEST_CASE("bits_per_beat reproduces the reported arithmetic") {
  // 8 latent frames/s at 120 bpm with 81 live codes.
  const double bits = bits_per_beat(120.0, 81, 8.0);
  CHECK(std::abs(bits - 25.4) < 0.05);
  CHECK(bits_per_beat(120.0, 1, 8.0) == 0.0);
  const double full = bits_per_beat(60.0, 81, 8.0);
  const double doubled = bits_per_beat(120.0, 81, 8.0);
  CHECK(doubled == doctest::Approx(full / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(bits_per_beat(120.0, 0, 8.0), ConfigError);
}

}  // TEST_SUITE

