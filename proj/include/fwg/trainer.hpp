// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end optimization: Adam with bias correction, exponential
// learning-rate decay, early stopping with best-weights restoration, and the
// per-variant batch samplers (random fragments for recurrent models, centered
// windows otherwise, online augmentation for both).
#pragma once

#include <cmath>
#include <fstream>
#include <limits>

#include "fwg/dataio.hpp"
#include "fwg/model.hpp"

namespace fwg {

template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m, v;
  int64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double base_lr = 1e-3;
  double decay = 0.97;  // per-epoch multiplier
  double lr = 1e-3;

  static OptimizerState init(const ModelParams<T>& params, double base_lr,
                             double decay) {
    OptimizerState st;
    st.base_lr = base_lr;
    st.lr = base_lr;
    st.decay = decay;
    st.m.resize(static_cast<size_t>(params.count()));
    st.v.resize(static_cast<size_t>(params.count()));
    for (int i = 0; i < params.count(); ++i) {
      st.m[static_cast<size_t>(i)].assign(static_cast<size_t>(params.at(i).size()), T(0));
      st.v[static_cast<size_t>(i)].assign(static_cast<size_t>(params.at(i).size()), T(0));
    }
    return st;
  }
};

// One Adam update from the gradients accumulated in the parameter tensors.
template <typename T>
void adam_step(ModelParams<T>& params, OptimizerState<T>& st) {
  check_shape(static_cast<int>(st.m.size()) == params.count(),
              "adam_step: optimizer state does not match parameters");
  ++st.t;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (int i = 0; i < params.count(); ++i) {
    Tensor<T>& p = params.at(i);
    if (!p.has_grad()) continue;  // no gradient flow this step
    auto& g = p.grad_vec();
    auto& m = st.m[static_cast<size_t>(i)];
    auto& v = st.v[static_cast<size_t>(i)];
    T* w = p.data();
    for (size_t j = 0; j < g.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = st.beta1 * static_cast<double>(m[j]) + (1.0 - st.beta1) * gj;
      const double vj = st.beta2 * static_cast<double>(v[j]) + (1.0 - st.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      w[j] = static_cast<T>(static_cast<double>(w[j]) -
                            st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
}

// eta_epoch = eta_0 * decay^epoch
template <typename T>
double decay_lr(OptimizerState<T>& st, int epoch) {
  check_shape(st.decay > 0.0 && st.decay <= 1.0, "decay_lr: decay must be in (0,1]");
  st.lr = st.base_lr * std::pow(st.decay, static_cast<double>(epoch));
  return st.lr;
}

struct EarlyStopper {
  double best = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int patience = 10;
  int best_epoch = -1;

  bool observe(double val_loss, int epoch) {
    if (val_loss < best) {
      best = val_loss;
      best_epoch = epoch;
      epochs_since_improvement = 0;
      return true;
    }
    ++epochs_since_improvement;
    return false;
  }
  bool should_stop() const { return epochs_since_improvement > patience; }
};

struct TrainConfig {
  int batch = 32;
  double lr = 1e-3;
  double decay = 0.97;
  int patience = 10;
  int fragment_len = kFragmentLen;
  int window = 32;  // tpool/tconv training window (tpool max variant uses 16)
  uint64_t seed = 1;
  int max_epochs = 40;
  int steps_per_epoch = 0;  // 0: roughly one pass over the training frames
  bool augment = true;
  int val_samples = 64;
  bool pretrain_finetune = false;  // frame-by-frame phase before windowed phase
  int pretrain_epochs = 0;         // 0: max_epochs/4 when the phase is enabled
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0, train_loss = 0.0, val_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  int stopped_epoch = -1;
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;

  std::string to_csv() const {
    std::string s = "epoch,lr,train_loss,val_loss\n";
    for (const auto& e : epochs)
      s += strfmt("%d,%.9g,%.9g,%.9g\n", e.epoch, e.lr, e.train_loss, e.val_loss);
    return s;
  }
};

// ---- batch assembly -----------------------------------------------------------

template <typename T>
struct TrainBatch {
  Tensor<T> frames;         // [B,C,H,W], [B,W,C,H,W'] or [B,L,C,H,W']
  std::vector<int> labels;  // B (frame/window) or B*L (fragment, batch-major)
};

namespace detail {

template <typename T>
void copy_cast(const Tensor<float>& src, T* dst) {
  const float* s = src.data();
  for (int64_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(s[i]);
}

}  // namespace detail

// Assembles training and fixed validation batches for one variant.
template <typename T>
class BatchSampler {
 public:
  BatchSampler(const Dataset& ds, Variant variant, const TrainConfig& cfg,
               uint64_t stream)
      : ds_(ds), variant_(variant), cfg_(cfg), rng_(Rng(cfg.seed).fork(stream)) {
    check_shape(!ds.sequences.empty(), "sampler: empty dataset split");
  }

  bool recurrent() const {
    return variant_ == Variant::rnn || variant_ == Variant::lstm ||
           variant_ == Variant::tconv_lstm;
  }

  // window length 0 = the configured one; pretraining passes 1
  TrainBatch<T> next(int window_override = 0) {
    if (recurrent()) return next_fragments();
    if (variant_ == Variant::single) return next_frames();
    return next_windows(window_override ? window_override : cfg_.window);
  }

  // Deterministic evaluation-mode sample spread over the split.
  TrainBatch<T> fixed_sample(int count) const {
    BatchSampler copy(*this);
    copy.rng_ = Rng(cfg_.seed).fork(0xfeed);
    copy.fixed_mode_ = true;
    TrainBatch<T> b;
    if (copy.recurrent())
      b = copy.next_fragments(count);
    else if (variant_ == Variant::single)
      b = copy.next_frames(count);
    else
      b = copy.next_windows(cfg_.window, count);
    return b;
  }

 private:
  const VideoSequence& pick_sequence(int i, int count) {
    if (fixed_mode_) {
      // round-robin for the fixed sample, random for training
      (void)count;
      return ds_.sequences[static_cast<size_t>(i) % ds_.sequences.size()];
    }
    return ds_.sequences[static_cast<size_t>(rng_.uniform_int(
        static_cast<int64_t>(ds_.sequences.size())))];
  }

  TrainBatch<T> next_fragments(int count = 0) {
    const int B = count ? count : cfg_.batch;
    const int L = cfg_.fragment_len;
    const auto& s0 = ds_.sequences[0];
    TrainBatch<T> out;
    out.frames = Tensor<T>(Shape{B, L, s0.channels(), s0.height(), s0.width()});
    out.labels.reserve(static_cast<size_t>(B) * L);
    const int64_t item = out.frames.size() / B;
    for (int b = 0; b < B; ++b) {
      const VideoSequence& seq = pick_sequence(b, B);
      Fragment f;
      if (cfg_.augment && !fixed_mode_) {
        f = sample_augmented_fragment(seq, rng_, sample_augment_params(rng_), L);
      } else if (fixed_mode_) {
        const int Tn = seq.frames_count();
        const int span = std::max(1, Tn - L);
        f = fragment_at(seq, (b * 7919) % span, L);
      } else {
        f = sample_fragment(seq, rng_, L);
      }
      detail::copy_cast(f.frames, out.frames.data() + b * item);
      for (uint16_t l : f.labels) out.labels.push_back(l);
    }
    return out;
  }

  TrainBatch<T> next_windows(int w, int count = 0) {
    const int B = count ? count : cfg_.batch;
    const auto& s0 = ds_.sequences[0];
    TrainBatch<T> out;
    out.frames = Tensor<T>(Shape{B, w, s0.channels(), s0.height(), s0.width()});
    out.labels.reserve(static_cast<size_t>(B));
    const int64_t item = out.frames.size() / B;
    for (int b = 0; b < B; ++b) {
      const VideoSequence& seq = pick_sequence(b, B);
      const int Tn = seq.frames_count();
      const int center = fixed_mode_
                             ? (b * 7919) % Tn
                             : static_cast<int>(rng_.uniform_int(Tn));
      if (cfg_.augment && !fixed_mode_) {
        const AugmentParams p = sample_augment_params(rng_);
        const int src_len = std::max(2, static_cast<int>(std::lround(w * p.tscale)));
        Tensor<float> src = window_at(seq, center, src_len);
        std::vector<uint16_t> src_labels(static_cast<size_t>(src_len));
        for (int j = 0; j < src_len; ++j)
          src_labels[static_cast<size_t>(j)] =
              seq.labels[static_cast<size_t>(std::clamp(center - src_len / 2 + j, 0, Tn - 1))];
        Tensor<float> rs_frames;
        std::vector<uint16_t> rs_labels;
        resample_time(src, src_labels, w, &rs_frames, &rs_labels);
        Tensor<float> aug = apply_affine(rs_frames, p);
        detail::copy_cast(aug, out.frames.data() + b * item);
        out.labels.push_back(rs_labels[static_cast<size_t>(w / 2)]);
      } else {
        Tensor<float> win = window_at(seq, center, w);
        detail::copy_cast(win, out.frames.data() + b * item);
        out.labels.push_back(seq.labels[static_cast<size_t>(center)]);
      }
    }
    return out;
  }

  TrainBatch<T> next_frames(int count = 0) {
    const int B = count ? count : cfg_.batch;
    const auto& s0 = ds_.sequences[0];
    TrainBatch<T> out;
    out.frames = Tensor<T>(Shape{B, s0.channels(), s0.height(), s0.width()});
    out.labels.reserve(static_cast<size_t>(B));
    const int64_t item = out.frames.size() / B;
    for (int b = 0; b < B; ++b) {
      const VideoSequence& seq = pick_sequence(b, B);
      const int Tn = seq.frames_count();
      const int t = fixed_mode_ ? (b * 7919) % Tn
                                : static_cast<int>(rng_.uniform_int(Tn));
      Tensor<float> frame1 = window_at(seq, t, 1);  // [1,C,H,W]
      if (cfg_.augment && !fixed_mode_)
        frame1 = apply_affine(frame1, sample_augment_params(rng_));
      detail::copy_cast(frame1, out.frames.data() + b * item);
      out.labels.push_back(seq.labels[static_cast<size_t>(t)]);
    }
    return out;
  }

  const Dataset& ds_;
  Variant variant_;
  TrainConfig cfg_;
  Rng rng_;
  bool fixed_mode_ = false;
};

// ---- the loop -------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> batch_forward(Model<T>& model, const TrainBatch<T>& batch, bool training,
                        Rng* rng, int window) {
  (void)window;
  if (model.variant() == Variant::single)
    return model.forward_frames(batch.frames, training, rng);
  if (model.recurrent()) {
    Tensor<T> probs = model.forward_sequence(batch.frames, training, rng);
    return ops::reshape(probs, Shape{probs.dim(0) * probs.dim(1), probs.dim(2)});
  }
  return model.forward_window(batch.frames, training, rng);
}

template <typename T>
double eval_loss(Model<T>& model, const TrainBatch<T>& batch) {
  Tensor<T> probs = batch_forward(model, batch, /*training=*/false, nullptr, 0);
  Tensor<T> loss = ops::cross_entropy(probs, batch.labels);
  return static_cast<double>(loss[0]);
}

}  // namespace detail

// Trains in place. Deterministic in (model seed, cfg.seed); restores the
// best-validation parameters before returning.
template <typename T>
TrainHistory train(Model<T>& model, const Dataset& train_ds, const Dataset& val_ds,
                   const TrainConfig& cfg, OptimizerState<T>* opt_out = nullptr) {
  check_shape(!train_ds.sequences.empty(), "train: empty training split");
  check_shape(!val_ds.sequences.empty(), "train: empty validation split");

  BatchSampler<T> train_sampler(train_ds, model.variant(), cfg, 1);
  BatchSampler<T> val_sampler(val_ds, model.variant(), cfg, 2);
  const TrainBatch<T> train_probe = train_sampler.fixed_sample(cfg.val_samples);
  const TrainBatch<T> val_probe = val_sampler.fixed_sample(cfg.val_samples);

  int steps = cfg.steps_per_epoch;
  if (steps <= 0) {
    const int64_t frames = train_ds.total_frames();
    int64_t per_step;
    if (model.recurrent())
      per_step = static_cast<int64_t>(cfg.batch) * cfg.fragment_len;
    else if (model.variant() == Variant::single)
      per_step = cfg.batch;
    else
      per_step = static_cast<int64_t>(cfg.batch) * cfg.window;
    steps = static_cast<int>(std::max<int64_t>(1, frames / std::max<int64_t>(1, per_step)));
    steps = std::min(steps, 512);
  }

  OptimizerState<T> opt = OptimizerState<T>::init(model.parameters(), cfg.lr, cfg.decay);
  EarlyStopper stopper;
  stopper.patience = cfg.patience;
  Rng dropout_rng = Rng(cfg.seed).fork(3);

  TrainHistory hist;
  hist.initial_train_loss = detail::eval_loss(model, train_probe);

  std::vector<std::vector<T>> best_snapshot = model.parameters().snapshot();
  const int pretrain_epochs =
      cfg.pretrain_finetune
          ? (cfg.pretrain_epochs > 0 ? cfg.pretrain_epochs : cfg.max_epochs / 4)
          : 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    decay_lr(opt, epoch);
    const bool pretrain_phase =
        pretrain_epochs > 0 && epoch < pretrain_epochs &&
        model.variant() == Variant::tpool;
    double loss_sum = 0.0;
    for (int step = 0; step < steps; ++step) {
      TrainBatch<T> batch = train_sampler.next(pretrain_phase ? 1 : 0);
      model.parameters().zero_grads();
      Tape<T> tape;
      model.parameters().watch_all(tape);
      Tensor<T> probs =
          detail::batch_forward(model, batch, /*training=*/true, &dropout_rng, 0);
      Tensor<T> loss = ops::cross_entropy(probs, batch.labels);
      const double lval = static_cast<double>(loss[0]);
      if (!std::isfinite(lval))
        throw NumericError(strfmt("loss is not finite at epoch %d step %d "
                                  "(lr=%g); aborting",
                                  epoch, step, opt.lr));
      tape.backward(loss);
      model.parameters().detach_all();
      adam_step(model.parameters(), opt);
      loss_sum += lval;
    }
    EpochStats es;
    es.epoch = epoch;
    es.lr = opt.lr;
    es.train_loss = loss_sum / steps;
    es.val_loss = detail::eval_loss(model, val_probe);
    hist.epochs.push_back(es);

    if (stopper.observe(es.val_loss, epoch))
      best_snapshot = model.parameters().snapshot();
    if (stopper.should_stop()) {
      hist.stopped_epoch = epoch;
      break;
    }
  }
  if (hist.stopped_epoch < 0)
    hist.stopped_epoch = static_cast<int>(hist.epochs.size()) - 1;
  hist.best_epoch = stopper.best_epoch;
  model.parameters().restore(best_snapshot);
  hist.final_train_loss = detail::eval_loss(model, train_probe);
  if (opt_out) *opt_out = opt;
  return hist;
}

// ---- checkpoint container ---------------------------------------------------------
//
//   magic "FWGC", version u16, arch string, variant u8, n_classes u16,
//   input signature u32x4 (channels, frames, height, width), window u16,
//   epoch u32, rng u64, config echo string, parameter count u32, then per
//   parameter: name, rank u8, extents u32[], f32 data; optimizer-state flag
//   u8 followed by t u64, beta1/beta2/eps/base_lr/decay/lr f64 and per
//   parameter m/v f32 when present. Little-endian throughout.

struct CheckpointMeta {
  std::string arch;
  Variant variant = Variant::single;
  int n_classes = 0;
  InputSignature input;
  int window = 0;
  int epoch = 0;
  uint64_t rng_state = 0;
  std::string config_echo;
};

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model,
                     const OptimizerState<T>* opt, const CheckpointMeta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write("FWGC", 4);
  write_u16(os, 1);
  write_string(os, render_arch(model.spec()));
  write_u8(os, static_cast<uint8_t>(model.variant()));
  write_u16(os, static_cast<uint16_t>(model.n_classes()));
  write_u32(os, static_cast<uint32_t>(model.input().channels));
  write_u32(os, static_cast<uint32_t>(model.input().frames));
  write_u32(os, static_cast<uint32_t>(model.input().height));
  write_u32(os, static_cast<uint32_t>(model.input().width));
  write_u16(os, static_cast<uint16_t>(meta.window));
  write_u32(os, static_cast<uint32_t>(meta.epoch));
  write_u64(os, meta.rng_state);
  write_string(os, meta.config_echo);
  const auto& params = model.parameters();
  write_u32(os, static_cast<uint32_t>(params.count()));
  for (int i = 0; i < params.count(); ++i) {
    const Tensor<T>& t = params.at(i);
    write_string(os, params.name(i));
    write_u8(os, static_cast<uint8_t>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) write_u32(os, static_cast<uint32_t>(t.dim(d)));
    for (int64_t j = 0; j < t.size(); ++j)
      write_f32(os, static_cast<float>(t[j]));
  }
  write_u8(os, opt ? 1 : 0);
  if (opt) {
    write_u64(os, static_cast<uint64_t>(opt->t));
    write_f64(os, opt->beta1);
    write_f64(os, opt->beta2);
    write_f64(os, opt->eps);
    write_f64(os, opt->base_lr);
    write_f64(os, opt->decay);
    write_f64(os, opt->lr);
    for (const auto& m : opt->m)
      for (T x : m) write_f32(os, static_cast<float>(x));
    for (const auto& v : opt->v)
      for (T x : v) write_f32(os, static_cast<float>(x));
  }
  if (!os) throw DataError("write failed for " + path);
}

struct LoadedCheckpoint {
  CheckpointMeta meta;
  Model<float> model;
  OptimizerState<float> opt;
  bool has_opt = false;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, "FWGC", 4) != 0)
    throw DataError(path + ": not a checkpoint (bad magic)");
  if (read_u16(is) != 1) throw DataError(path + ": unsupported checkpoint version");
  LoadedCheckpoint out;
  out.meta.arch = read_string(is);
  out.meta.variant = static_cast<Variant>(read_u8(is));
  out.meta.n_classes = read_u16(is);
  out.meta.input.channels = static_cast<int>(read_u32(is));
  out.meta.input.frames = static_cast<int>(read_u32(is));
  out.meta.input.height = static_cast<int>(read_u32(is));
  out.meta.input.width = static_cast<int>(read_u32(is));
  out.meta.window = read_u16(is);
  out.meta.epoch = static_cast<int>(read_u32(is));
  out.meta.rng_state = read_u64(is);
  out.meta.config_echo = read_string(is);

  ArchSpec spec = parse_arch(out.meta.arch);
  spec.input = out.meta.input;
  BuildOptions bo;
  bo.init_params = false;
  out.model = Model<float>::build(spec, out.meta.n_classes, out.meta.variant, 0, bo);

  const uint32_t n_params = read_u32(is);
  if (static_cast<int>(n_params) != out.model.parameters().count())
    throw DataError(strfmt("%s: %u parameters in file, model has %d",
                           path.c_str(), n_params, out.model.parameters().count()));
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = read_string(is);
    const int rank = read_u8(is);
    Shape shape(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d) shape[static_cast<size_t>(d)] = static_cast<int>(read_u32(is));
    Tensor<float>& dst = out.model.parameters().at(static_cast<int>(i));
    if (out.model.parameters().name(static_cast<int>(i)) != name ||
        dst.shape() != shape)
      throw DataError(path + ": parameter mismatch at " + name);
    for (int64_t j = 0; j < dst.size(); ++j) dst[j] = read_f32(is);
  }
  out.has_opt = read_u8(is) != 0;
  if (out.has_opt) {
    out.opt = OptimizerState<float>::init(out.model.parameters(), 1e-3, 0.97);
    out.opt.t = static_cast<int64_t>(read_u64(is));
    out.opt.beta1 = read_f64(is);
    out.opt.beta2 = read_f64(is);
    out.opt.eps = read_f64(is);
    out.opt.base_lr = read_f64(is);
    out.opt.decay = read_f64(is);
    out.opt.lr = read_f64(is);
    for (auto& m : out.opt.m)
      for (auto& x : m) x = read_f32(is);
    for (auto& v : out.opt.v)
      for (auto& x : v) x = read_f32(is);
  }
  if (!is) throw DataError(path + ": truncated checkpoint");
  return out;
}

}  // namespace fwg
