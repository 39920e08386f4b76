#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "fsir/errors.hpp"
#include "fsir/image.hpp"
#include "fsir/patches.hpp"
#include "fsir/rfn.hpp"
#include "fsir/rng.hpp"

namespace fsir {

enum class RnnMode { PlainRnn, RfnRnn };

// Cell weights. Pre-activations are w_zy^T y_t + w_zz^T z_{t-1} + b with a
// ReLU nonlinearity; a linear head reads the last hidden state.
struct RnnParams {
  Eigen::MatrixXd w_zy;  // input_width x n_n
  Eigen::MatrixXd w_zz;  // n_n x n_n
  Eigen::VectorXd b;     // n_n
  Eigen::MatrixXd w_fc;  // n_n x head_dim
  Eigen::VectorXd b_fc;  // head_dim
};

struct RnnModel {
  RnnMode mode = RnnMode::PlainRnn;
  PatchGeometry geom;
  RfnConfig rfn;
  RnnParams params;

  int n_n() const { return static_cast<int>(params.w_zz.rows()); }
  int input_width() const { return static_cast<int>(params.w_zy.rows()); }
  int head_dim() const { return static_cast<int>(params.w_fc.cols()); }
};

struct TrainConfig {
  RnnMode mode = RnnMode::PlainRnn;
  int n_n = 1000;
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;          // global-norm clip; <= 0 disables
  double target_train_loss = 0.0;  // stop once epoch loss falls below; <= 0 disables
  std::uint64_t seed = 0;
  RfnConfig rfn;

  void validate() const {
    if (n_n < 1) throw ValidationError("train config: n_n must be >= 1");
    if (epochs < 0) throw ValidationError("train config: epochs must be >= 0");
    if (batch_size < 1) throw ValidationError("train config: batch_size must be >= 1");
    if (!(learning_rate > 0.0))
      throw ValidationError("train config: learning_rate must be positive");
  }
};

// --------------------------------------------------------------------------
// Forward pass
// --------------------------------------------------------------------------

// Per-step state kept for backpropagation. Columns index batch samples;
// z[t] is the hidden state after step t+1 (z_0 = 0 is implicit).
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> pre;  // gate pre-activations
  std::vector<Eigen::MatrixXd> q;    // relu(pre)
  std::vector<Eigen::MatrixXd> r;    // linear branch (gated mode only)
  std::vector<Eigen::MatrixXd> z;    // hidden states fed to the recurrence
  Eigen::RowVectorXd out;            // scalar head per sample
};

// ys[t] is input_width x batch. In gated mode ys holds the energy-normalized
// windows and ys_raw the raw ones; in plain mode ys_raw is ignored.
inline ForwardTrace rnn_forward_batch(const RnnModel& model,
                                      const std::vector<Eigen::MatrixXd>& ys,
                                      const std::vector<Eigen::MatrixXd>* ys_raw) {
  const int l_t = model.geom.l_t;
  if (static_cast<int>(ys.size()) != l_t)
    throw ValidationError("rnn_forward_batch: wrong number of time steps");
  const bool gated = model.mode == RnnMode::RfnRnn;
  if (gated && (!ys_raw || static_cast<int>(ys_raw->size()) != l_t))
    throw ValidationError("rnn_forward_batch: gated mode needs raw windows");
  const Eigen::Index batch = ys[0].cols();
  const int n_n = model.n_n();

  ForwardTrace trace;
  trace.pre.resize(l_t);
  trace.q.resize(l_t);
  trace.z.resize(l_t);
  if (gated) trace.r.resize(l_t);

  Eigen::MatrixXd z_prev = Eigen::MatrixXd::Zero(n_n, batch);
  for (int t = 0; t < l_t; ++t) {
    if (ys[t].rows() != model.input_width() || ys[t].cols() != batch)
      throw ValidationError("rnn_forward_batch: window shape mismatch");
    trace.pre[t] = model.params.w_zy.transpose() * ys[t] +
                   model.params.w_zz.transpose() * z_prev;
    trace.pre[t].colwise() += model.params.b;
    trace.q[t] = trace.pre[t].cwiseMax(0.0);
    if (gated) {
      trace.r[t] = model.rfn.c1 * (model.params.w_zy.transpose() * (*ys_raw)[t]);
      trace.z[t] = trace.q[t].cwiseProduct(trace.r[t]);
    } else {
      trace.z[t] = trace.q[t];
    }
    z_prev = trace.z[t];
  }
  trace.out = model.params.w_fc.col(0).transpose() * trace.z[l_t - 1];
  trace.out.array() += model.params.b_fc[0];
  return trace;
}

// Single-sample forward; returns the scalar prediction.
inline double rnn_predict(const RnnModel& model, const AnalysisSample& sample) {
  const int l_t = model.geom.l_t;
  if (sample.inputs.rows() != l_t || sample.inputs.cols() != model.input_width())
    throw ValidationError("rnn_predict: sample shape mismatch");
  std::vector<Eigen::MatrixXd> ys(l_t), ys_raw;
  if (model.mode == RnnMode::RfnRnn) {
    if (!sample.rfn_inputs)
      throw ValidationError("rnn_predict: gated model needs normalized windows");
    ys_raw.resize(l_t);
    for (int t = 0; t < l_t; ++t) {
      ys[t] = sample.rfn_inputs->row(t).transpose();
      ys_raw[t] = sample.inputs.row(t).transpose();
    }
    return rnn_forward_batch(model, ys, &ys_raw).out[0];
  }
  for (int t = 0; t < l_t; ++t) ys[t] = sample.inputs.row(t).transpose();
  return rnn_forward_batch(model, ys, nullptr).out[0];
}

// One plain cell update, z_t = relu(w_zy^T y + w_zz^T z_prev + b). Exposed so
// the learned-ISTA correspondence can be checked step by step.
inline Eigen::VectorXd rnn_cell_step(const RnnParams& p, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& z_prev) {
  if (y.size() != p.w_zy.rows() || z_prev.size() != p.w_zz.rows())
    throw ValidationError("rnn_cell_step: dimension mismatch");
  return (p.w_zy.transpose() * y + p.w_zz.transpose() * z_prev + p.b).cwiseMax(0.0);
}

// Fraction of exactly-zero entries in the final hidden state, averaged over
// samples. ReLU produces genuine zeros, so this measures code sparsity.
inline double latent_sparsity(const RnnModel& model,
                              const std::vector<AnalysisSample>& samples) {
  if (samples.empty()) throw ValidationError("latent_sparsity: empty sample set");
  std::size_t zeros = 0, total = 0;
  for (const auto& s : samples) {
    const int l_t = model.geom.l_t;
    std::vector<Eigen::MatrixXd> ys(l_t), ys_raw;
    const bool gated = model.mode == RnnMode::RfnRnn;
    if (gated) {
      if (!s.rfn_inputs)
        throw ValidationError("latent_sparsity: gated model needs normalized windows");
      ys_raw.resize(l_t);
    }
    for (int t = 0; t < l_t; ++t) {
      ys[t] = gated ? s.rfn_inputs->row(t).transpose() : s.inputs.row(t).transpose();
      if (gated) ys_raw[t] = s.inputs.row(t).transpose();
    }
    ForwardTrace tr = rnn_forward_batch(model, ys, gated ? &ys_raw : nullptr);
    const Eigen::MatrixXd& z = tr.z.back();
    for (Eigen::Index i = 0; i < z.size(); ++i)
      if (z(i) == 0.0) ++zeros;
    total += static_cast<std::size_t>(z.size());
  }
  return static_cast<double>(zeros) / static_cast<double>(total);
}

// --------------------------------------------------------------------------
// Backward pass
// --------------------------------------------------------------------------

struct GradientSet {
  Eigen::MatrixXd w_zy, w_zz, w_fc;
  Eigen::VectorXd b, b_fc;

  static GradientSet zeros_like(const RnnParams& p) {
    GradientSet g;
    g.w_zy = Eigen::MatrixXd::Zero(p.w_zy.rows(), p.w_zy.cols());
    g.w_zz = Eigen::MatrixXd::Zero(p.w_zz.rows(), p.w_zz.cols());
    g.w_fc = Eigen::MatrixXd::Zero(p.w_fc.rows(), p.w_fc.cols());
    g.b = Eigen::VectorXd::Zero(p.b.size());
    g.b_fc = Eigen::VectorXd::Zero(p.b_fc.size());
    return g;
  }

  double squared_norm() const {
    return w_zy.squaredNorm() + w_zz.squaredNorm() + w_fc.squaredNorm() +
           b.squaredNorm() + b_fc.squaredNorm();
  }

  void scale(double s) {
    w_zy *= s;
    w_zz *= s;
    w_fc *= s;
    b *= s;
    b_fc *= s;
  }
};

// Gradients of the batch-mean squared error via backpropagation through time.
// The ReLU subgradient at 0 is taken as 0.
inline GradientSet bptt_gradients(const RnnModel& model,
                                  const std::vector<Eigen::MatrixXd>& ys,
                                  const std::vector<Eigen::MatrixXd>* ys_raw,
                                  const Eigen::RowVectorXd& targets,
                                  const ForwardTrace& trace, double* loss_out) {
  const int l_t = model.geom.l_t;
  const Eigen::Index batch = targets.size();
  const bool gated = model.mode == RnnMode::RfnRnn;
  GradientSet g = GradientSet::zeros_like(model.params);

  const Eigen::RowVectorXd err = trace.out - targets;
  if (loss_out) *loss_out = err.squaredNorm() / static_cast<double>(batch);
  const Eigen::RowVectorXd d_out = (2.0 / static_cast<double>(batch)) * err;

  g.w_fc.col(0) = trace.z[l_t - 1] * d_out.transpose();
  g.b_fc[0] = d_out.sum();
  Eigen::MatrixXd d_z = model.params.w_fc.col(0) * d_out;

  for (int t = l_t - 1; t >= 0; --t) {
    Eigen::MatrixXd d_pre;
    if (gated) {
      const Eigen::MatrixXd d_q = d_z.cwiseProduct(trace.r[t]);
      const Eigen::MatrixXd d_r = d_z.cwiseProduct(trace.q[t]);
      d_pre = d_q.cwiseProduct(
          (trace.pre[t].array() > 0.0).cast<double>().matrix());
      g.w_zy.noalias() += model.rfn.c1 * ((*ys_raw)[t] * d_r.transpose());
    } else {
      d_pre = d_z.cwiseProduct(
          (trace.pre[t].array() > 0.0).cast<double>().matrix());
    }
    g.w_zy.noalias() += ys[t] * d_pre.transpose();
    if (t > 0) g.w_zz.noalias() += trace.z[t - 1] * d_pre.transpose();
    g.b += d_pre.rowwise().sum();
    d_z = model.params.w_zz * d_pre;
  }
  return g;
}

// --------------------------------------------------------------------------
// Training
// --------------------------------------------------------------------------

namespace detail {

struct AdamState {
  GradientSet m, v;
  long step = 0;

  explicit AdamState(const RnnParams& p)
      : m(GradientSet::zeros_like(p)), v(GradientSet::zeros_like(p)) {}
};

inline void adam_update_tensor(Eigen::Ref<Eigen::MatrixXd> param,
                               Eigen::Ref<Eigen::MatrixXd> m,
                               Eigen::Ref<Eigen::MatrixXd> v,
                               const Eigen::MatrixXd& g, const TrainConfig& cfg,
                               double bias1, double bias2) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
  v = cfg.adam_beta2 * v.array().matrix() +
      (1.0 - cfg.adam_beta2) * g.array().square().matrix();
  param.array() -= cfg.learning_rate * (m.array() / bias1) /
                   ((v.array() / bias2).sqrt() + cfg.adam_eps);
}

inline void adam_step(RnnParams& p, AdamState& st, const GradientSet& g,
                      const TrainConfig& cfg) {
  ++st.step;
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
  adam_update_tensor(p.w_zy, st.m.w_zy, st.v.w_zy, g.w_zy, cfg, bias1, bias2);
  adam_update_tensor(p.w_zz, st.m.w_zz, st.v.w_zz, g.w_zz, cfg, bias1, bias2);
  adam_update_tensor(p.w_fc, st.m.w_fc, st.v.w_fc, g.w_fc, cfg, bias1, bias2);
  adam_update_tensor(p.b, st.m.b, st.v.b, g.b, cfg, bias1, bias2);
  adam_update_tensor(p.b_fc, st.m.b_fc, st.v.b_fc, g.b_fc, cfg, bias1, bias2);
}

inline void glorot_fill(Eigen::MatrixXd& m, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
}

}  // namespace detail

inline RnnParams init_params(int input_width, int n_n, int head_dim, std::uint64_t seed) {
  Rng rng(seed);
  RnnParams p;
  p.w_zy.resize(input_width, n_n);
  detail::glorot_fill(p.w_zy, input_width, n_n, rng);
  p.w_zz.resize(n_n, n_n);
  detail::glorot_fill(p.w_zz, n_n, n_n, rng);
  p.b = Eigen::VectorXd::Zero(n_n);
  p.w_fc.resize(n_n, head_dim);
  detail::glorot_fill(p.w_fc, n_n, head_dim, rng);
  p.b_fc = Eigen::VectorXd::Zero(head_dim);
  return p;
}

struct TrainResult {
  RnnModel model;
  std::vector<double> epoch_losses;
  bool diverged = false;
};

// Column-gathered views of a dataset: inputs[t] is input_width x n_samples.
struct TensorDataset {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> rfn_inputs;  // empty unless samples carry them
  Eigen::RowVectorXd targets;
};

inline TensorDataset pack_dataset(const std::vector<AnalysisSample>& samples,
                                  const PatchGeometry& geom, bool need_rfn) {
  if (samples.empty()) throw ValidationError("pack_dataset: empty sample set");
  geom.validate();
  const int l_t = geom.l_t;
  const int width = geom.width();
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  TensorDataset d;
  d.inputs.assign(l_t, Eigen::MatrixXd(width, n));
  if (need_rfn) d.rfn_inputs.assign(l_t, Eigen::MatrixXd(width, n));
  d.targets.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const AnalysisSample& s = samples[i];
    if (s.inputs.rows() != l_t || s.inputs.cols() != width)
      throw ValidationError("pack_dataset: sample shape mismatch");
    if (need_rfn && !s.rfn_inputs)
      throw ValidationError("pack_dataset: sample lacks normalized windows");
    for (int t = 0; t < l_t; ++t) {
      d.inputs[t].col(i) = s.inputs.row(t).transpose();
      if (need_rfn) d.rfn_inputs[t].col(i) = s.rfn_inputs->row(t).transpose();
    }
    d.targets[i] = s.target;
  }
  return d;
}

// Minibatch Adam on the batch-mean squared error. Deterministic for a fixed
// seed: initialization and the per-epoch shuffles derive from cfg.seed, and
// every other operation is sequential. If an epoch produces a non-finite
// loss the parameters roll back to the end of the previous epoch and
// training stops with diverged = true.
inline TrainResult train(const std::vector<AnalysisSample>& samples,
                         const PatchGeometry& geom, const TrainConfig& cfg) {
  cfg.validate();
  geom.validate();
  const bool gated = cfg.mode == RnnMode::RfnRnn;
  const TensorDataset data = pack_dataset(samples, geom, gated);
  const Eigen::Index n = data.targets.size();
  const int l_t = geom.l_t;

  TrainResult result;
  result.model.mode = cfg.mode;
  result.model.geom = geom;
  result.model.rfn = cfg.rfn;
  result.model.params = init_params(geom.width(), cfg.n_n, 1, derive_seed(cfg.seed, 0));

  detail::AdamState adam(result.model.params);
  RnnParams snapshot = result.model.params;

  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;

  std::vector<Eigen::MatrixXd> ys(l_t), ys_raw(gated ? l_t : 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 1 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Eigen::RowVectorXd targets(bsz);
      for (int t = 0; t < l_t; ++t) {
        ys[t].resize(geom.width(), bsz);
        if (gated) ys_raw[t].resize(geom.width(), bsz);
      }
      for (Eigen::Index k = 0; k < bsz; ++k) {
        const Eigen::Index idx = order[start + k];
        targets[k] = data.targets[idx];
        for (int t = 0; t < l_t; ++t) {
          if (gated) {
            ys[t].col(k) = data.rfn_inputs[t].col(idx);
            ys_raw[t].col(k) = data.inputs[t].col(idx);
          } else {
            ys[t].col(k) = data.inputs[t].col(idx);
          }
        }
      }
      const ForwardTrace trace =
          rnn_forward_batch(result.model, ys, gated ? &ys_raw : nullptr);
      double batch_loss = 0.0;
      GradientSet g = bptt_gradients(result.model, ys, gated ? &ys_raw : nullptr,
                                     targets, trace, &batch_loss);
      loss_sum += batch_loss * static_cast<double>(bsz);
      if (cfg.grad_clip > 0.0) {
        const double norm = std::sqrt(g.squared_norm());
        if (norm > cfg.grad_clip) g.scale(cfg.grad_clip / norm);
      }
      detail::adam_step(result.model.params, adam, g, cfg);
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss)) {
      result.model.params = snapshot;
      result.diverged = true;
      break;
    }
    result.epoch_losses.push_back(epoch_loss);
    snapshot = result.model.params;
    if (cfg.target_train_loss > 0.0 && epoch_loss <= cfg.target_train_loss) break;
  }
  return result;
}

inline void write_epoch_csv(const std::vector<double>& losses, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss\n";
  char buf[40];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", losses[i]);
    out << i << "," << buf << "\n";
  }
}

// --------------------------------------------------------------------------
// Whole-image inference
// --------------------------------------------------------------------------

// Applies the model at every pixel. Work splits across threads by output
// row; each row is an independent batched forward pass, so results do not
// depend on the thread count. Gated models recompute the energy-normalized
// view internally, with the default window unless one is supplied (the
// weight file does not carry the window, only tau and c1).
inline Image infer_image(const Image& degraded, const RnnModel& model, int threads = 1,
                         const Kernel* energy_kernel = nullptr) {
  if (threads < 1) throw ValidationError("infer_image: threads must be >= 1");
  model.geom.validate();
  const bool gated = model.mode == RnnMode::RfnRnn;
  Image normalized(1, 1);
  if (gated) {
    const Kernel kernel = energy_kernel ? *energy_kernel : rfn_default_kernel();
    normalized = normalize_image(degraded, kernel, model.rfn).normalized;
  }

  Image out(degraded.height, degraded.width, 0.0, degraded.peak);
  const int l_t = model.geom.l_t;
  const int width = model.geom.width();

  auto run_rows = [&](int row_begin, int row_end) {
    std::vector<Eigen::MatrixXd> ys(l_t), ys_raw(gated ? l_t : 0);
    for (int t = 0; t < l_t; ++t) {
      ys[t].resize(width, degraded.width);
      if (gated) ys_raw[t].resize(width, degraded.width);
    }
    for (int i = row_begin; i < row_end; ++i) {
      for (int j = 0; j < degraded.width; ++j) {
        for (int t = 0; t < l_t; ++t) {
          const int r = i - l_t + 1 + t;
          for (int c = 0; c < width; ++c) {
            const int cc = j - model.geom.n_left + c;
            if (gated) {
              ys[t](c, j) = normalized.at_clamped(r, cc);
              ys_raw[t](c, j) = degraded.at_clamped(r, cc);
            } else {
              ys[t](c, j) = degraded.at_clamped(r, cc);
            }
          }
        }
      }
      const ForwardTrace trace =
          rnn_forward_batch(model, ys, gated ? &ys_raw : nullptr);
      for (int j = 0; j < degraded.width; ++j) out.at(i, j) = trace.out[j];
    }
  };

  if (threads == 1 || degraded.height == 1) {
    run_rows(0, degraded.height);
    return out;
  }
  const int n_workers = std::min(threads, degraded.height);
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  const int chunk = (degraded.height + n_workers - 1) / n_workers;
  for (int w = 0; w < n_workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(degraded.height, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(run_rows, lo, hi);
  }
  for (auto& th : pool) th.join();
  return out;
}

// --------------------------------------------------------------------------
// Weight file: magic "RNN1", little-endian int64 header
// (input_width, n_n, head_dim, l_t, mode), doubles c1 and tau, then the
// tensors row-major in declaration order.
// --------------------------------------------------------------------------

namespace detail {

inline void put_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw IoError(path + ": truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

inline double get_f64(std::ifstream& in, const std::string& path) {
  const std::uint64_t bits = get_u64(in, path);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

inline void get_matrix(std::ifstream& in, Eigen::MatrixXd& m, const std::string& path) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_f64(in, path);
}

}  // namespace detail

inline void save_model(const RnnModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("RNN1", 4);
  detail::put_u64(out, static_cast<std::uint64_t>(model.input_width()));
  detail::put_u64(out, static_cast<std::uint64_t>(model.n_n()));
  detail::put_u64(out, static_cast<std::uint64_t>(model.head_dim()));
  detail::put_u64(out, static_cast<std::uint64_t>(model.geom.l_t));
  detail::put_u64(out, model.mode == RnnMode::RfnRnn ? 1 : 0);
  detail::put_f64(out, model.rfn.c1);
  detail::put_f64(out, model.rfn.tau);
  detail::put_matrix(out, model.params.w_zy);
  detail::put_matrix(out, model.params.w_zz);
  detail::put_matrix(out, model.params.b);
  detail::put_matrix(out, model.params.w_fc);
  detail::put_matrix(out, model.params.b_fc);
  if (!out) throw IoError("write failed: " + path);
}

inline RnnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "RNN1", 4) != 0)
    throw IoError(path + ": not a weight file");
  const auto input_width = static_cast<int>(detail::get_u64(in, path));
  const auto n_n = static_cast<int>(detail::get_u64(in, path));
  const auto head_dim = static_cast<int>(detail::get_u64(in, path));
  const auto l_t = static_cast<int>(detail::get_u64(in, path));
  const std::uint64_t mode_flag = detail::get_u64(in, path);
  if (input_width < 1 || n_n < 1 || head_dim < 1 || l_t < 1 || mode_flag > 1)
    throw IoError(path + ": malformed header");

  RnnModel model;
  model.mode = mode_flag == 1 ? RnnMode::RfnRnn : RnnMode::PlainRnn;
  model.geom.l_t = l_t;
  model.geom.n_left = (input_width - 1) / 2;
  model.geom.n_right = input_width - 1 - model.geom.n_left;
  model.rfn.c1 = detail::get_f64(in, path);
  model.rfn.tau = detail::get_f64(in, path);
  model.params.w_zy.resize(input_width, n_n);
  model.params.w_zz.resize(n_n, n_n);
  model.params.b.resize(n_n);
  model.params.w_fc.resize(n_n, head_dim);
  model.params.b_fc.resize(head_dim);
  Eigen::MatrixXd tmp;
  detail::get_matrix(in, model.params.w_zy, path);
  detail::get_matrix(in, model.params.w_zz, path);
  tmp.resize(n_n, 1);
  detail::get_matrix(in, tmp, path);
  model.params.b = tmp.col(0);
  detail::get_matrix(in, model.params.w_fc, path);
  tmp.resize(head_dim, 1);
  detail::get_matrix(in, tmp, path);
  model.params.b_fc = tmp.col(0);
  return model;
}

}  // namespace fsir
