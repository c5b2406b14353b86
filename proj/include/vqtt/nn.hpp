#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vqtt/common.hpp"
#include "vqtt/rng.hpp"

// Minimal reverse-mode autodiff over Eigen matrices, sized for this project:
// batches of equal-length 1D sequences stored row-major in time
// (rows = all frames of sequence 0, then sequence 1, ...; cols = channels).

namespace vqtt::nn {

struct Node {
  Mat value;
  Mat grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad = Mat::Zero(value.rows(), value.cols());
    }
  }
  bool has_grad() const {
    return grad.rows() == value.rows() && grad.cols() == value.cols();
  }
};

using Var = std::shared_ptr<Node>;

Var constant(Mat v);
Var parameter(Mat v);

// Records backward closures during forward construction; backward() runs them
// in reverse. With recording=false the ops compute values only (inference).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording(recording) {}

  void push(std::function<void()> fn) {
    if (recording) ops_.push_back(std::move(fn));
  }
  void backward(const Var& loss) {
    loss->ensure_grad();
    loss->grad.setConstant(1.0);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  bool recording;

 private:
  std::vector<std::function<void()>> ops_;
};

// Frame counts of the sequences packed into one value matrix.
struct SeqShape {
  std::vector<long> lengths;

  long total() const;
  long batch() const { return static_cast<long>(lengths.size()); }
  long uniform_length() const;  // throws ShapeError unless all equal
  std::vector<long> offsets() const;

  static SeqShape uniform(long batch, long length) {
    return SeqShape{std::vector<long>(static_cast<size_t>(batch), length)};
  }
};

// --- layer parameter bundles -------------------------------------------------

struct ConvParams {
  Var w;  // (kernel*in_ch) x out_ch
  Var b;  // 1 x out_ch
  int kernel = 1, stride = 1, pad = 0;
  int in_ch = 0, out_ch = 0;
};
ConvParams make_conv(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng);

struct ConvTransposeParams {
  Var w;  // in_ch x (kernel*out_ch)
  Var b;  // 1 x out_ch
  int kernel = 1, stride = 1, pad = 0;
  int in_ch = 0, out_ch = 0;
};
ConvTransposeParams make_conv_transpose(int in_ch, int out_ch, int kernel, int stride, int pad,
                                        Rng& rng);

struct BatchNormParams {
  Var gamma;  // 1 x ch
  Var beta;   // 1 x ch
  Mat running_mean;
  Mat running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};
BatchNormParams make_batch_norm(int ch, double eps);

struct GruParams {
  Var w_ih;  // in_ch x 3H, gate column blocks [r | z | n]
  Var w_hh;  // H x 3H
  Var b_ih;  // 1 x 3H
  Var b_hh;  // 1 x 3H
  int in_ch = 0, hidden = 0;
};
GruParams make_gru(int in_ch, int hidden, Rng& rng);

struct DenseParams {
  Var w;  // in x out
  Var b;  // 1 x out
};
DenseParams make_dense(int in, int out, Rng& rng);

// --- ops ----------------------------------------------------------------------

Var conv1d(Tape& tape, const Var& x, const ConvParams& p, const SeqShape& in_shape,
           SeqShape* out_shape = nullptr);
Var conv1d_transpose(Tape& tape, const Var& x, const ConvTransposeParams& p,
                     const SeqShape& in_shape, SeqShape* out_shape = nullptr);
// `update_running` applies only in training mode (kept off for finite-difference probes).
Var batch_norm(Tape& tape, const Var& x, BatchNormParams& p, bool training,
               bool update_running = true);
Var gru(Tape& tape, const Var& x, const GruParams& p, const SeqShape& shape);
Var dense(Tape& tape, const Var& x, const DenseParams& p);

Var leaky_relu(Tape& tape, const Var& x, double slope);
Var relu(Tape& tape, const Var& x);
Var add(Tape& tape, const Var& a, const Var& b);
Var sub(Tape& tape, const Var& a, const Var& b);
Var concat_cols(Tape& tape, const Var& a, const Var& b);
// Replicate row i of `s` (batch x ch) across all frames of sequence i.
Var broadcast_rows(Tape& tape, const Var& s, const SeqShape& shape);
// Gather each sequence's final frame into a (batch x ch) matrix.
Var take_last_rows(Tape& tape, const Var& x, const SeqShape& shape);
// Row lookup with scatter-add backward (codebook row selection).
Var gather_rows(Tape& tape, const Var& table, const std::vector<int>& indices);

Var mse(Tape& tape, const Var& a, const Var& b);        // 1x1 scalar
Var mean_all(Tape& tape, const Var& x);                 // 1x1 scalar
Var scale(Tape& tape, const Var& x, double c);
Var add_const(Tape& tape, const Var& x, double c);
Var rowwise_sqnorm(Tape& tape, const Var& x);           // N x 1
Var sqrt_eps(Tape& tape, const Var& x, double eps = 1e-12);
Var l2_normalize_rows(Tape& tape, const Var& x, double eps = 1e-12);

// --- optimizer ------------------------------------------------------------------

struct NamedParams {
  std::vector<std::pair<std::string, Var>> params;
  std::vector<std::pair<std::string, Mat*>> buffers;  // batchnorm running stats

  void add(const std::string& name, const Var& v) { params.emplace_back(name, v); }
  void add_buffer(const std::string& name, Mat* m) { buffers.emplace_back(name, m); }
  void add_conv(const std::string& name, ConvParams& p);
  void add_conv_transpose(const std::string& name, ConvTransposeParams& p);
  void add_batch_norm(const std::string& name, BatchNormParams& p);
  void add_gru(const std::string& name, GruParams& p);
  void add_dense(const std::string& name, DenseParams& p);
};

class Adam {
 public:
  Adam(std::vector<Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void zero_grad();
  // Returns the pre-clip global gradient norm. clip_norm <= 0 disables clipping.
  double step(double clip_norm = 0.0);

  long steps_taken() const { return t_; }
  const std::vector<Var>& params() const { return params_; }
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  void set_steps_taken(long t) { t_ = t; }
  double learning_rate() const { return lr_; }

 private:
  std::vector<Var> params_;
  std::vector<Mat> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace vqtt::nn
