#include "vqtt/nn.hpp"

#include <cmath>
#include <numeric>

namespace vqtt::nn {

namespace {

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Mat uniform_mat(long rows, long cols, double bound, Rng& rng) {
  return Mat::NullaryExpr(rows, cols, [&] { return rng.uniform(-bound, bound); });
}

}  // namespace

Var constant(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

Var parameter(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

long SeqShape::total() const {
  return std::accumulate(lengths.begin(), lengths.end(), 0L);
}

long SeqShape::uniform_length() const {
  if (lengths.empty()) throw ShapeError("empty sequence batch");
  for (long l : lengths) {
    if (l != lengths[0]) throw ShapeError("sequence batch must have uniform lengths");
  }
  return lengths[0];
}

std::vector<long> SeqShape::offsets() const {
  std::vector<long> off(lengths.size());
  long acc = 0;
  for (size_t i = 0; i < lengths.size(); ++i) {
    off[i] = acc;
    acc += lengths[i];
  }
  return off;
}

ConvParams make_conv(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng) {
  ConvParams p;
  p.kernel = kernel;
  p.stride = stride;
  p.pad = pad;
  p.in_ch = in_ch;
  p.out_ch = out_ch;
  const double bound = std::sqrt(1.0 / (static_cast<double>(in_ch) * kernel));
  p.w = parameter(uniform_mat(static_cast<long>(kernel) * in_ch, out_ch, bound, rng));
  p.b = parameter(uniform_mat(1, out_ch, bound, rng));
  return p;
}

ConvTransposeParams make_conv_transpose(int in_ch, int out_ch, int kernel, int stride, int pad,
                                        Rng& rng) {
  ConvTransposeParams p;
  p.kernel = kernel;
  p.stride = stride;
  p.pad = pad;
  p.in_ch = in_ch;
  p.out_ch = out_ch;
  const double bound = std::sqrt(1.0 / (static_cast<double>(in_ch) * kernel));
  p.w = parameter(uniform_mat(in_ch, static_cast<long>(kernel) * out_ch, bound, rng));
  p.b = parameter(uniform_mat(1, out_ch, bound, rng));
  return p;
}

BatchNormParams make_batch_norm(int ch, double eps) {
  BatchNormParams p;
  p.gamma = parameter(Mat::Ones(1, ch));
  p.beta = parameter(Mat::Zero(1, ch));
  p.running_mean = Mat::Zero(1, ch);
  p.running_var = Mat::Ones(1, ch);
  p.eps = eps;
  return p;
}

GruParams make_gru(int in_ch, int hidden, Rng& rng) {
  GruParams p;
  p.in_ch = in_ch;
  p.hidden = hidden;
  const double bound = std::sqrt(1.0 / hidden);
  p.w_ih = parameter(uniform_mat(in_ch, 3L * hidden, bound, rng));
  p.w_hh = parameter(uniform_mat(hidden, 3L * hidden, bound, rng));
  p.b_ih = parameter(uniform_mat(1, 3L * hidden, bound, rng));
  p.b_hh = parameter(uniform_mat(1, 3L * hidden, bound, rng));
  return p;
}

DenseParams make_dense(int in, int out, Rng& rng) {
  DenseParams p;
  const double bound = std::sqrt(1.0 / in);
  p.w = parameter(uniform_mat(in, out, bound, rng));
  p.b = parameter(uniform_mat(1, out, bound, rng));
  return p;
}

void NamedParams::add_conv(const std::string& name, ConvParams& p) {
  add(name + ".w", p.w);
  add(name + ".b", p.b);
}
void NamedParams::add_conv_transpose(const std::string& name, ConvTransposeParams& p) {
  add(name + ".w", p.w);
  add(name + ".b", p.b);
}
void NamedParams::add_batch_norm(const std::string& name, BatchNormParams& p) {
  add(name + ".gamma", p.gamma);
  add(name + ".beta", p.beta);
  add_buffer(name + ".running_mean", &p.running_mean);
  add_buffer(name + ".running_var", &p.running_var);
}
void NamedParams::add_gru(const std::string& name, GruParams& p) {
  add(name + ".w_ih", p.w_ih);
  add(name + ".w_hh", p.w_hh);
  add(name + ".b_ih", p.b_ih);
  add(name + ".b_hh", p.b_hh);
}
void NamedParams::add_dense(const std::string& name, DenseParams& p) {
  add(name + ".w", p.w);
  add(name + ".b", p.b);
}

// --- convolution ---------------------------------------------------------------

namespace {

long conv_out_len(long in_len, int kernel, int stride, int pad) {
  return (in_len + 2L * pad - kernel) / stride + 1;
}

// Gather the window for every output frame: out rows x (kernel*in_ch).
Mat im2col(const Mat& x, const SeqShape& shape, int kernel, int stride, int pad) {
  const long cin = x.cols();
  const auto offsets = shape.offsets();
  long total_out = 0;
  for (long l : shape.lengths) total_out += conv_out_len(l, kernel, stride, pad);
  Mat cols = Mat::Zero(total_out, static_cast<long>(kernel) * cin);
  long out_row = 0;
  for (size_t s = 0; s < shape.lengths.size(); ++s) {
    const long len = shape.lengths[s], off = offsets[s];
    const long out_len = conv_out_len(len, kernel, stride, pad);
    for (long t = 0; t < out_len; ++t, ++out_row) {
      const long start = t * stride - pad;
      for (int j = 0; j < kernel; ++j) {
        const long src = start + j;
        if (src >= 0 && src < len) {
          cols.block(out_row, static_cast<long>(j) * cin, 1, cin) = x.row(off + src);
        }
      }
    }
  }
  return cols;
}

void col2im_add(Mat& dx, const Mat& dcols, const SeqShape& shape, int kernel, int stride,
                int pad) {
  const long cin = dx.cols();
  const auto offsets = shape.offsets();
  long out_row = 0;
  for (size_t s = 0; s < shape.lengths.size(); ++s) {
    const long len = shape.lengths[s], off = offsets[s];
    const long out_len = conv_out_len(len, kernel, stride, pad);
    for (long t = 0; t < out_len; ++t, ++out_row) {
      const long start = t * stride - pad;
      for (int j = 0; j < kernel; ++j) {
        const long src = start + j;
        if (src >= 0 && src < len) {
          dx.row(off + src) += dcols.block(out_row, static_cast<long>(j) * cin, 1, cin);
        }
      }
    }
  }
}

}  // namespace

Var conv1d(Tape& tape, const Var& x, const ConvParams& p, const SeqShape& in_shape,
           SeqShape* out_shape) {
  if (x->value.cols() != p.in_ch) throw ShapeError("conv1d: channel mismatch");
  SeqShape os;
  for (long l : in_shape.lengths) os.lengths.push_back(conv_out_len(l, p.kernel, p.stride, p.pad));
  if (out_shape) *out_shape = os;

  auto cols = std::make_shared<Mat>(im2col(x->value, in_shape, p.kernel, p.stride, p.pad));
  Var out = constant((*cols * p.w->value).rowwise() + p.b->value.row(0));
  out->requires_grad = x->requires_grad || p.w->requires_grad;

  tape.push([x, w = p.w, b = p.b, out, cols, in_shape, kernel = p.kernel, stride = p.stride,
             pad = p.pad] {
    if (!out->has_grad()) return;
    const Mat& g = out->grad;
    if (w->requires_grad) {
      w->ensure_grad();
      w->grad.noalias() += cols->transpose() * g;
      b->ensure_grad();
      b->grad.row(0) += g.colwise().sum();
    }
    if (x->requires_grad) {
      x->ensure_grad();
      const Mat dcols = g * w->value.transpose();
      col2im_add(x->grad, dcols, in_shape, kernel, stride, pad);
    }
  });
  return out;
}

Var conv1d_transpose(Tape& tape, const Var& x, const ConvTransposeParams& p,
                     const SeqShape& in_shape, SeqShape* out_shape) {
  if (x->value.cols() != p.in_ch) throw ShapeError("conv1d_transpose: channel mismatch");
  SeqShape os;
  for (long l : in_shape.lengths) {
    os.lengths.push_back((l - 1) * p.stride - 2L * p.pad + p.kernel);
  }
  if (out_shape) *out_shape = os;

  const long cout = p.out_ch;
  const Mat z = x->value * p.w->value;  // N x (kernel*out_ch)
  Mat y = Mat::Zero(os.total(), cout);
  const auto in_off = in_shape.offsets();
  const auto out_off = os.offsets();
  for (size_t s = 0; s < in_shape.lengths.size(); ++s) {
    for (long l = 0; l < in_shape.lengths[s]; ++l) {
      for (int j = 0; j < p.kernel; ++j) {
        const long u = l * p.stride - p.pad + j;
        if (u >= 0 && u < os.lengths[s]) {
          y.row(out_off[s] + u) += z.block(in_off[s] + l, static_cast<long>(j) * cout, 1, cout);
        }
      }
    }
  }
  y.rowwise() += p.b->value.row(0);
  Var out = constant(std::move(y));
  out->requires_grad = x->requires_grad || p.w->requires_grad;

  tape.push([x, w = p.w, b = p.b, out, in_shape, os, kernel = p.kernel, stride = p.stride,
             pad = p.pad, cout] {
    if (!out->has_grad()) return;
    const Mat& g = out->grad;
    // Regather dZ with the same index map, then both param and input grads are GEMMs.
    Mat dz = Mat::Zero(in_shape.total(), static_cast<long>(kernel) * cout);
    const auto in_off2 = in_shape.offsets();
    const auto out_off2 = os.offsets();
    for (size_t s = 0; s < in_shape.lengths.size(); ++s) {
      for (long l = 0; l < in_shape.lengths[s]; ++l) {
        for (int j = 0; j < kernel; ++j) {
          const long u = l * stride - pad + j;
          if (u >= 0 && u < os.lengths[s]) {
            dz.block(in_off2[s] + l, static_cast<long>(j) * cout, 1, cout) =
                g.row(out_off2[s] + u);
          }
        }
      }
    }
    if (w->requires_grad) {
      w->ensure_grad();
      w->grad.noalias() += x->value.transpose() * dz;
      b->ensure_grad();
      b->grad.row(0) += g.colwise().sum();
    }
    if (x->requires_grad) {
      x->ensure_grad();
      x->grad.noalias() += dz * w->value.transpose();
    }
  });
  return out;
}

// --- batch norm ------------------------------------------------------------------

Var batch_norm(Tape& tape, const Var& x, BatchNormParams& p, bool training,
               bool update_running) {
  const long n = x->value.rows();
  const long c = x->value.cols();
  if (p.gamma->value.cols() != c) throw ShapeError("batch_norm: channel mismatch");

  Mat mean, var;
  if (training) {
    mean = x->value.colwise().mean();
    Mat centered = x->value.rowwise() - mean.row(0);
    var = centered.array().square().colwise().mean();
    if (update_running) {
      p.running_mean = (1.0 - p.momentum) * p.running_mean + p.momentum * mean;
      p.running_var = (1.0 - p.momentum) * p.running_var + p.momentum * var;
    }
  } else {
    mean = p.running_mean;
    var = p.running_var;
  }
  Mat inv_std = (var.array() + p.eps).sqrt().inverse();
  auto xhat = std::make_shared<Mat>(
      (x->value.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array());
  Var out = constant((xhat->array().rowwise() * p.gamma->value.row(0).array()).matrix().rowwise() +
                     p.beta->value.row(0));
  out->requires_grad = x->requires_grad || p.gamma->requires_grad;

  auto inv_std_keep = std::make_shared<Mat>(std::move(inv_std));
  tape.push([x, gamma = p.gamma, beta = p.beta, out, xhat, inv_std_keep, training, n] {
    if (!out->has_grad()) return;
    const Mat& g = out->grad;
    if (gamma->requires_grad) {
      gamma->ensure_grad();
      gamma->grad.row(0) += (g.array() * xhat->array()).colwise().sum().matrix();
      beta->ensure_grad();
      beta->grad.row(0) += g.colwise().sum();
    }
    if (x->requires_grad) {
      x->ensure_grad();
      const Mat dxhat = g.array().rowwise() * gamma->value.row(0).array();
      if (training) {
        const Mat sum_dxhat = dxhat.colwise().sum();
        const Mat sum_dxhat_xhat = (dxhat.array() * xhat->array()).colwise().sum().matrix();
        const double inv_n = 1.0 / static_cast<double>(n);
        Mat dx = dxhat;
        dx.rowwise() -= (inv_n * sum_dxhat).row(0);
        dx.array() -= (xhat->array().rowwise() * (inv_n * sum_dxhat_xhat).row(0).array());
        dx.array().rowwise() *= inv_std_keep->row(0).array();
        x->grad += dx;
      } else {
        x->grad.array() += dxhat.array().rowwise() * inv_std_keep->row(0).array();
      }
    }
  });
  return out;
}

// --- GRU --------------------------------------------------------------------------

Var gru(Tape& tape, const Var& x, const GruParams& p, const SeqShape& shape) {
  if (x->value.cols() != p.in_ch) throw ShapeError("gru: channel mismatch");
  const long T = shape.uniform_length();
  const long B = shape.batch();
  const long H = p.hidden;
  const auto offsets = shape.offsets();

  auto R = std::make_shared<Mat>(Mat::Zero(x->value.rows(), H));
  auto Z = std::make_shared<Mat>(Mat::Zero(x->value.rows(), H));
  auto Nc = std::make_shared<Mat>(Mat::Zero(x->value.rows(), H));   // tanh candidate
  auto U = std::make_shared<Mat>(Mat::Zero(x->value.rows(), H));    // W_hn h_prev + b_hn
  auto Hprev = std::make_shared<Mat>(Mat::Zero(x->value.rows(), H));

  Mat h = Mat::Zero(B, H);
  Mat out_val = Mat::Zero(x->value.rows(), H);
  Mat xt(B, p.in_ch), gi(B, 3 * H), gh(B, 3 * H);
  for (long t = 0; t < T; ++t) {
    for (long s = 0; s < B; ++s) xt.row(s) = x->value.row(offsets[s] + t);
    gi.noalias() = xt * p.w_ih->value;
    gi.rowwise() += p.b_ih->value.row(0);
    gh.noalias() = h * p.w_hh->value;
    gh.rowwise() += p.b_hh->value.row(0);
    for (long s = 0; s < B; ++s) {
      const long row = offsets[s] + t;
      Hprev->row(row) = h.row(s);
      for (long k = 0; k < H; ++k) {
        const double r = sigmoid(gi(s, k) + gh(s, k));
        const double z = sigmoid(gi(s, H + k) + gh(s, H + k));
        const double u = gh(s, 2 * H + k);
        const double n = std::tanh(gi(s, 2 * H + k) + r * u);
        (*R)(row, k) = r;
        (*Z)(row, k) = z;
        (*U)(row, k) = u;
        (*Nc)(row, k) = n;
        h(s, k) = (1.0 - z) * n + z * h(s, k);
      }
      out_val.row(row) = h.row(s);
    }
  }
  Var out = constant(std::move(out_val));
  out->requires_grad = x->requires_grad || p.w_ih->requires_grad;

  tape.push([x, out, p, R, Z, Nc, U, Hprev, T, B, H, offsets] {
    if (!out->has_grad()) return;
    const bool wants_param = p.w_ih->requires_grad;
    if (wants_param) {
      p.w_ih->ensure_grad();
      p.w_hh->ensure_grad();
      p.b_ih->ensure_grad();
      p.b_hh->ensure_grad();
    }
    if (x->requires_grad) x->ensure_grad();

    Mat dh_carry = Mat::Zero(B, H);
    Mat dgi(B, 3 * H), dgh(B, 3 * H), xt(B, static_cast<long>(p.in_ch)), hprev_t(B, H);
    for (long t = T - 1; t >= 0; --t) {
      for (long s = 0; s < B; ++s) {
        const long row = offsets[s] + t;
        xt.row(s) = x->value.row(row);
        hprev_t.row(s) = Hprev->row(row);
        for (long k = 0; k < H; ++k) {
          const double dh = out->grad(row, k) + dh_carry(s, k);
          const double r = (*R)(row, k), z = (*Z)(row, k), n = (*Nc)(row, k), u = (*U)(row, k);
          const double hp = (*Hprev)(row, k);
          const double dz = dh * (hp - n);
          const double dn = dh * (1.0 - z);
          const double da_n = dn * (1.0 - n * n);
          const double dr = da_n * u;
          const double da_r = dr * r * (1.0 - r);
          const double da_z = dz * z * (1.0 - z);
          dgi(s, k) = da_r;
          dgi(s, H + k) = da_z;
          dgi(s, 2 * H + k) = da_n;
          dgh(s, k) = da_r;
          dgh(s, H + k) = da_z;
          dgh(s, 2 * H + k) = da_n * r;
          dh_carry(s, k) = dh * z;  // direct h_{t-1} path; W_hh path added below
        }
      }
      if (wants_param) {
        p.w_ih->grad.noalias() += xt.transpose() * dgi;
        p.w_hh->grad.noalias() += hprev_t.transpose() * dgh;
        p.b_ih->grad.row(0) += dgi.colwise().sum();
        p.b_hh->grad.row(0) += dgh.colwise().sum();
      }
      dh_carry.noalias() += dgh * p.w_hh->value.transpose();
      if (x->requires_grad) {
        const Mat dxt = dgi * p.w_ih->value.transpose();
        for (long s = 0; s < B; ++s) x->grad.row(offsets[s] + t) += dxt.row(s);
      }
    }
  });
  return out;
}

Var dense(Tape& tape, const Var& x, const DenseParams& p) {
  Var out = constant((x->value * p.w->value).rowwise() + p.b->value.row(0));
  out->requires_grad = x->requires_grad || p.w->requires_grad;
  tape.push([x, w = p.w, b = p.b, out] {
    if (!out->has_grad()) return;
    const Mat& g = out->grad;
    if (w->requires_grad) {
      w->ensure_grad();
      w->grad.noalias() += x->value.transpose() * g;
      b->ensure_grad();
      b->grad.row(0) += g.colwise().sum();
    }
    if (x->requires_grad) {
      x->ensure_grad();
      x->grad.noalias() += g * w->value.transpose();
    }
  });
  return out;
}

// --- elementwise & reductions -------------------------------------------------------

Var leaky_relu(Tape& tape, const Var& x, double slope) {
  Var out = constant(x->value.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; }));
  out->requires_grad = x->requires_grad;
  tape.push([x, out, slope] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    x->grad.array() +=
        out->grad.array() * x->value.unaryExpr([slope](double v) {
                              return v > 0.0 ? 1.0 : slope;
                            }).array();
  });
  return out;
}

Var relu(Tape& tape, const Var& x) {
  Var out = constant(x->value.cwiseMax(0.0));
  out->requires_grad = x->requires_grad;
  tape.push([x, out] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    x->grad.array() +=
        out->grad.array() * (x->value.array() > 0.0).cast<double>();
  });
  return out;
}

Var add(Tape& tape, const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    throw ShapeError("add: shape mismatch");
  }
  Var out = constant(a->value + b->value);
  out->requires_grad = a->requires_grad || b->requires_grad;
  tape.push([a, b, out] {
    if (!out->has_grad()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += out->grad;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad += out->grad;
    }
  });
  return out;
}

Var sub(Tape& tape, const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    throw ShapeError("sub: shape mismatch");
  }
  Var out = constant(a->value - b->value);
  out->requires_grad = a->requires_grad || b->requires_grad;
  tape.push([a, b, out] {
    if (!out->has_grad()) return;
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += out->grad;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad -= out->grad;
    }
  });
  return out;
}

Var concat_cols(Tape& tape, const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows()) throw ShapeError("concat_cols: row mismatch");
  Mat v(a->value.rows(), a->value.cols() + b->value.cols());
  v << a->value, b->value;
  Var out = constant(std::move(v));
  out->requires_grad = a->requires_grad || b->requires_grad;
  tape.push([a, b, out] {
    if (!out->has_grad()) return;
    const long ca = a->value.cols();
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += out->grad.leftCols(ca);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad += out->grad.rightCols(b->value.cols());
    }
  });
  return out;
}

Var broadcast_rows(Tape& tape, const Var& s, const SeqShape& shape) {
  if (s->value.rows() != shape.batch()) throw ShapeError("broadcast_rows: batch mismatch");
  Mat v(shape.total(), s->value.cols());
  const auto offsets = shape.offsets();
  for (long i = 0; i < shape.batch(); ++i) {
    v.middleRows(offsets[i], shape.lengths[i]).rowwise() = s->value.row(i);
  }
  Var out = constant(std::move(v));
  out->requires_grad = s->requires_grad;
  tape.push([s, out, shape] {
    if (!out->has_grad() || !s->requires_grad) return;
    s->ensure_grad();
    const auto off = shape.offsets();
    for (long i = 0; i < shape.batch(); ++i) {
      s->grad.row(i) += out->grad.middleRows(off[i], shape.lengths[i]).colwise().sum();
    }
  });
  return out;
}

Var take_last_rows(Tape& tape, const Var& x, const SeqShape& shape) {
  const auto offsets = shape.offsets();
  Mat v(shape.batch(), x->value.cols());
  for (long i = 0; i < shape.batch(); ++i) {
    if (shape.lengths[i] < 1) throw ShapeError("take_last_rows: empty sequence");
    v.row(i) = x->value.row(offsets[i] + shape.lengths[i] - 1);
  }
  Var out = constant(std::move(v));
  out->requires_grad = x->requires_grad;
  tape.push([x, out, shape] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    const auto off = shape.offsets();
    for (long i = 0; i < shape.batch(); ++i) {
      x->grad.row(off[i] + shape.lengths[i] - 1) += out->grad.row(i);
    }
  });
  return out;
}

Var gather_rows(Tape& tape, const Var& table, const std::vector<int>& indices) {
  Mat v(static_cast<long>(indices.size()), table->value.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= table->value.rows()) {
      throw ShapeError("gather_rows: index out of range");
    }
    v.row(static_cast<long>(i)) = table->value.row(indices[i]);
  }
  Var out = constant(std::move(v));
  out->requires_grad = table->requires_grad;
  tape.push([table, out, indices] {
    if (!out->has_grad() || !table->requires_grad) return;
    table->ensure_grad();
    for (size_t i = 0; i < indices.size(); ++i) {
      table->grad.row(indices[i]) += out->grad.row(static_cast<long>(i));
    }
  });
  return out;
}

Var mse(Tape& tape, const Var& a, const Var& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
    throw ShapeError("mse: shape mismatch");
  }
  const double n = static_cast<double>(a->value.size());
  Mat v(1, 1);
  v(0, 0) = (a->value - b->value).array().square().sum() / n;
  Var out = constant(std::move(v));
  out->requires_grad = a->requires_grad || b->requires_grad;
  tape.push([a, b, out, n] {
    if (!out->has_grad()) return;
    const double g = out->grad(0, 0) * 2.0 / n;
    const Mat diff = a->value - b->value;
    if (a->requires_grad) {
      a->ensure_grad();
      a->grad += g * diff;
    }
    if (b->requires_grad) {
      b->ensure_grad();
      b->grad -= g * diff;
    }
  });
  return out;
}

Var mean_all(Tape& tape, const Var& x) {
  const double n = static_cast<double>(x->value.size());
  Mat v(1, 1);
  v(0, 0) = x->value.sum() / n;
  Var out = constant(std::move(v));
  out->requires_grad = x->requires_grad;
  tape.push([x, out, n] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    x->grad.array() += out->grad(0, 0) / n;
  });
  return out;
}

Var scale(Tape& tape, const Var& x, double c) {
  Var out = constant(x->value * c);
  out->requires_grad = x->requires_grad;
  tape.push([x, out, c] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    x->grad += c * out->grad;
  });
  return out;
}

Var add_const(Tape& tape, const Var& x, double c) {
  Var out = constant(x->value.array() + c);
  out->requires_grad = x->requires_grad;
  tape.push([x, out] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    x->grad += out->grad;
  });
  return out;
}

Var rowwise_sqnorm(Tape& tape, const Var& x) {
  Mat v = x->value.array().square().rowwise().sum();
  Var out = constant(std::move(v));
  out->requires_grad = x->requires_grad;
  tape.push([x, out] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    x->grad.array() += 2.0 * (x->value.array().colwise() * out->grad.col(0).array());
  });
  return out;
}

Var sqrt_eps(Tape& tape, const Var& x, double eps) {
  Var out = constant(x->value.unaryExpr([eps](double v) { return std::sqrt(v + eps); }));
  out->requires_grad = x->requires_grad;
  tape.push([x, out] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    x->grad.array() += out->grad.array() / (2.0 * out->value.array());
  });
  return out;
}

Var l2_normalize_rows(Tape& tape, const Var& x, double eps) {
  const long n = x->value.rows();
  Mat norms(n, 1);
  for (long i = 0; i < n; ++i) norms(i, 0) = std::sqrt(x->value.row(i).squaredNorm() + eps);
  Mat v = x->value.array().colwise() / norms.col(0).array();
  Var out = constant(std::move(v));
  out->requires_grad = x->requires_grad;
  auto norms_keep = std::make_shared<Mat>(std::move(norms));
  tape.push([x, out, norms_keep] {
    if (!out->has_grad() || !x->requires_grad) return;
    x->ensure_grad();
    for (long i = 0; i < x->value.rows(); ++i) {
      const double inv = 1.0 / (*norms_keep)(i, 0);
      const Eigen::RowVectorXd y = out->value.row(i);
      const Eigen::RowVectorXd g = out->grad.row(i);
      x->grad.row(i) += inv * (g - y * g.dot(y));
    }
  });
  return out;
}

// --- Adam -----------------------------------------------------------------------------

Adam::Adam(std::vector<Var> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) {
    p->ensure_grad();
    p->grad.setZero();
  }
}

double Adam::step(double clip_norm) {
  double sq = 0.0;
  for (auto& p : params_) {
    if (p->has_grad()) sq += p->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  const double scale = (clip_norm > 0.0 && norm > clip_norm) ? clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p->has_grad()) continue;
    const Mat g = p->grad * scale;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Mat mhat = m_[i] / bc1;
    const Mat vhat = v_[i] / bc2;
    p->value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
  return norm;
}

}  // namespace vqtt::nn

