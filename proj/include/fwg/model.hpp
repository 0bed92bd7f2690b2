// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Turns a parsed architecture spec into an executable model: an ordered
// parameter store plus forward paths for the three input regimes
// (independent frames, fixed windows, full fragments).
#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "fwg/archspec.hpp"
#include "fwg/init.hpp"
#include "fwg/layers.hpp"
#include "fwg/recurrent.hpp"

namespace fwg {

// Named parameter collection. Order is the build order and is stable; it is
// also the checkpoint and optimizer-state order.
template <typename T>
class ModelParams {
 public:
  struct Item {
    std::string name;
    Tensor<T> tensor;
  };

  int add(std::string name, Tensor<T> t) {
    t.set_requires_grad(true);
    items_.push_back(Item{std::move(name), std::move(t)});
    return static_cast<int>(items_.size()) - 1;
  }

  Tensor<T>& at(int i) { return items_[static_cast<size_t>(i)].tensor; }
  const Tensor<T>& at(int i) const { return items_[static_cast<size_t>(i)].tensor; }
  const std::string& name(int i) const { return items_[static_cast<size_t>(i)].name; }
  int count() const { return static_cast<int>(items_.size()); }

  Tensor<T>* find(const std::string& name) {
    for (auto& it : items_)
      if (it.name == name) return &it.tensor;
    return nullptr;
  }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& it : items_) n += it.tensor.size();
    return n;
  }

  std::vector<std::pair<std::string, Shape>> shapes() const {
    std::vector<std::pair<std::string, Shape>> out;
    out.reserve(items_.size());
    for (const auto& it : items_) out.emplace_back(it.name, it.tensor.shape());
    return out;
  }

  void watch_all(Tape<T>& tape) {
    for (auto& it : items_) tape.watch(it.tensor);
  }
  void zero_grads() {
    for (auto& it : items_) it.tensor.zero_grad();
  }
  void detach_all() {
    for (auto& it : items_) it.tensor.detach();
  }

  // deep copy of all values (for best-epoch snapshots)
  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    out.reserve(items_.size());
    for (const auto& it : items_) out.push_back(it.tensor.vec());
    return out;
  }
  void restore(const std::vector<std::vector<T>>& snap) {
    check_shape(snap.size() == items_.size(), "parameter snapshot mismatch");
    for (size_t i = 0; i < snap.size(); ++i) {
      check_shape(snap[i].size() == items_[i].tensor.vec().size(),
                  "parameter snapshot mismatch for " + items_[i].name);
      items_[i].tensor.vec() = snap[i];
    }
  }

 private:
  std::vector<Item> items_;
};

struct BuildOptions {
  bool init_params = true;        // orthogonal init (matrices), zeros (vectors)
  bool spatial_activation = false;  // optional leaky ReLU after spatial convs
  double init_gain = 1.0;
};

template <typename T>
class Model {
 public:
  struct StageRef {
    enum class Kind { spatial, temporal, pool2d, pool3d };
    Kind kind;
    int kernels = -1;
    int bias = -1;
  };
  struct DenseRef {
    int weight = -1;
    int bias = -1;
  };
  struct StdCellRef {
    int w_in = -1, w_rec = -1, bias = -1;
  };
  struct LstmCellRef {
    int w_ix = -1, w_ih = -1, peep_i = -1, b_i = -1;
    int w_fx = -1, w_fh = -1, peep_f = -1, b_f = -1;
    int w_ox = -1, w_oh = -1, peep_o = -1, b_o = -1;
    int w_cx = -1, w_ch = -1, b_c = -1;
  };

  static Model build(const ArchSpec& spec, int n_classes, Variant variant,
                     uint64_t seed, BuildOptions opts = {});

  // [N,C,H,W] -> [N,K]; the single-frame path.
  Tensor<T> forward_frames(const Tensor<T>& x, bool training = false,
                           Rng* rng = nullptr);
  // [B,W,C,H,W'] -> [B,K]; one prediction per fixed-length window.
  Tensor<T> forward_window(const Tensor<T>& x, bool training = false,
                           Rng* rng = nullptr);
  // [B,T,C,H,W'] -> [B,T,K]; one prediction per frame.
  Tensor<T> forward_sequence(const Tensor<T>& x, bool training = false,
                             Rng* rng = nullptr);

  const ArchSpec& spec() const { return spec_; }
  Variant variant() const { return variant_; }
  int n_classes() const { return n_classes_; }
  const InputSignature& input() const { return input_; }
  bool recurrent() const {
    return variant_ == Variant::rnn || variant_ == Variant::lstm ||
           variant_ == Variant::tconv_lstm;
  }
  int hidden_units() const { return hidden_units_; }
  int64_t parameter_count() const { return params_.scalar_count(); }
  ModelParams<T>& parameters() { return params_; }
  const ModelParams<T>& parameters() const { return params_; }
  bool spatial_activation() const { return opts_.spatial_activation; }

  // Conv-stage features for one batch of independent frames: [N,C,H,W] ->
  // [N,F] flattened. Only valid when the stage has no temporal terms.
  Tensor<T> frame_features(const Tensor<T>& x, bool training, Rng* rng);
  // Dense stack applied to feature rows [N,F] -> [N,F'].
  Tensor<T> dense_stack(const Tensor<T>& x, bool training, Rng* rng);
  // Classifier head on feature rows [N,F'] -> [N,K] probabilities.
  Tensor<T> head(const Tensor<T>& x, bool training, Rng* rng);

 private:
  Tensor<T> conv_stages_frames(const Tensor<T>& x, bool training, Rng* rng);
  Tensor<T> conv_stages_sequence(const Tensor<T>& x, bool training, Rng* rng);
  Tensor<T> recurrent_head(const Tensor<T>& v, bool training, Rng* rng);

  // bias + activation after a spatial conv: always in plain stacks, flag-only
  // in factorized ones
  Tensor<T> spatial_epilogue(const Tensor<T>& y, const StageRef& s) {
    if (s.bias >= 0) {
      const int N = y.dim(0), K = y.dim(1), H = y.dim(2), W = y.dim(3);
      Tensor<T> flat = ops::reshape(y, Shape{1, N, K, H * W});
      Tensor<T> act = ops::leaky_relu(
          ops::add_channel_bias(flat, params_.at(s.bias)),
          static_cast<T>(kLeakySlope));
      return ops::reshape(act, Shape{N, K, H, W});
    }
    if (opts_.spatial_activation)
      return ops::leaky_relu(y, static_cast<T>(kLeakySlope));
    return y;
  }

  SpatialConvLayer<T> spatial_view(const StageRef& s) {
    return SpatialConvLayer<T>{params_.at(s.kernels)};
  }
  TemporalConvLayer<T> temporal_view(const StageRef& s) {
    return TemporalConvLayer<T>{params_.at(s.kernels), params_.at(s.bias)};
  }
  DenseLayer<T> dense_view(const DenseRef& d) {
    return DenseLayer<T>{params_.at(d.weight), params_.at(d.bias), kDenseDropout};
  }
  RnnStandardCell<T> std_cell_view(const StdCellRef& c) {
    return RnnStandardCell<T>{params_.at(c.w_in), params_.at(c.w_rec),
                              params_.at(c.bias)};
  }
  LstmPeepholeCell<T> lstm_cell_view(const LstmCellRef& c) {
    return LstmPeepholeCell<T>{
        params_.at(c.w_ix), params_.at(c.w_ih), params_.at(c.peep_i), params_.at(c.b_i),
        params_.at(c.w_fx), params_.at(c.w_fh), params_.at(c.peep_f), params_.at(c.b_f),
        params_.at(c.w_ox), params_.at(c.w_oh), params_.at(c.peep_o), params_.at(c.b_o),
        params_.at(c.w_cx), params_.at(c.w_ch), params_.at(c.b_c)};
  }
  ClassifierHead<T> head_view() {
    return ClassifierHead<T>{params_.at(head_.weight), params_.at(head_.bias)};
  }

  ArchSpec spec_;
  Variant variant_ = Variant::single;
  int n_classes_ = 0;
  InputSignature input_;
  BuildOptions opts_;
  ModelParams<T> params_;

  std::vector<StageRef> stages_;
  std::vector<DenseRef> dense_;
  DenseRef head_;
  bool has_tpool_ = false;
  TPoolMode tpool_mode_ = TPoolMode::mean;
  bool has_recurrent_ = false;
  bool lstm_cells_ = false;
  StdCellRef std_fwd_, std_bwd_;
  LstmCellRef lstm_fwd_, lstm_bwd_;
  int hidden_units_ = 0;
  int frame_feature_dim_ = 0;  // flattened conv output per frame
  int head_in_dim_ = 0;
};

// ---- building ---------------------------------------------------------------

namespace detail {

[[noreturn]] inline void build_fail(const std::string& msg) {
  throw UsageError("build: " + msg);
}

inline void check_variant_match(const ArchSpec& spec, Variant requested) {
  Variant implied = infer_variant(spec);
  if (implied == requested) return;
  std::string need;
  switch (requested) {
    case Variant::single: need = "no temporal terms"; break;
    case Variant::tpool: need = "a TPOOL term"; break;
    case Variant::tconv: need = "T/MP3 terms and no recurrent term"; break;
    case Variant::rnn: need = "an R term"; break;
    case Variant::lstm: need = "an L term (and no T terms)"; break;
    case Variant::tconv_lstm: need = "T terms plus an L term"; break;
  }
  build_fail(std::string("variant '") + variant_name(requested) + "' needs " +
             need + ", but the spec implies '" + variant_name(implied) + "'");
}

}  // namespace detail

template <typename T>
Model<T> Model<T>::build(const ArchSpec& spec, int n_classes, Variant variant,
                         uint64_t seed, BuildOptions opts) {
  detail::check_variant_match(spec, variant);
  if (n_classes < 2) detail::build_fail("need at least 2 classes");
  InputSignature in = spec.input;
  if (in.channels < 1 || in.height < 1 || in.width < 1 || in.frames < 1)
    detail::build_fail("spec has no usable input signature " +
                       strfmt("(%d@%dx%dx%d)", in.channels, in.frames,
                              in.height, in.width));

  Model<T> m;
  m.spec_ = spec;
  m.variant_ = variant;
  m.n_classes_ = n_classes;
  m.input_ = in;
  m.opts_ = opts;

  Rng rng(seed);
  auto weight = [&](const std::string& name, Shape shape) {
    Tensor<T> t = opts.init_params
                      ? orthogonal_init_shaped<T>(shape, opts.init_gain, rng)
                      : Tensor<T>(shape);
    return m.params_.add(name, std::move(t));
  };
  auto vec = [&](const std::string& name, int n) {
    return m.params_.add(name, Tensor<T>(Shape{n}));
  };

  int C = in.channels, H = in.height, W = in.width;
  int Tn = in.frames;  // tracked for dense sizing in time-reducing stacks
  int stage_idx = 0;
  bool in_dense = false;
  int feature_rows = 0;  // dense input width once the conv stage ends
  // In a factorized stack the spatial step is a pure linear map and the
  // temporal step carries bias and activation; in a plain stack every conv
  // layer gets its own bias and leaky ReLU.
  const bool factorized = spec.has(ArchTag::T);

  auto close_conv_stage = [&]() {
    if (in_dense) return;
    in_dense = true;
    m.frame_feature_dim_ = C * H * W;
    if (variant == Variant::tconv)
      feature_rows = Tn * m.frame_feature_dim_;  // time folded into features
    else
      feature_rows = m.frame_feature_dim_;
  };

  for (const ArchTerm& term : spec.terms) {
    const std::string id = strfmt("%02d", stage_idx);
    switch (term.tag) {
      case ArchTag::C: {
        StageRef s{StageRef::Kind::spatial,
                   weight(id + ".conv.kernels", {term.args[0], C, 3, 3}),
                   factorized ? -1 : vec(id + ".conv.bias", term.args[0])};
        m.stages_.push_back(s);
        C = term.args[0];
        ++stage_idx;
        break;
      }
      case ArchTag::T: {
        StageRef s{StageRef::Kind::temporal,
                   weight(id + ".tconv.kernels", {term.args[0], C, term.args[1]}),
                   vec(id + ".tconv.bias", term.args[0])};
        m.stages_.push_back(s);
        C = term.args[0];
        ++stage_idx;
        break;
      }
      case ArchTag::P:
        m.stages_.push_back(StageRef{StageRef::Kind::pool2d, -1, -1});
        H = (H + 1) / 2;
        W = (W + 1) / 2;
        ++stage_idx;
        break;
      case ArchTag::MP3:
        m.stages_.push_back(StageRef{StageRef::Kind::pool3d, -1, -1});
        Tn = (Tn + 1) / 2;
        H = (H + 1) / 2;
        W = (W + 1) / 2;
        ++stage_idx;
        break;
      case ArchTag::TPOOL:
        close_conv_stage();
        m.has_tpool_ = true;
        m.tpool_mode_ = term.pool_mode;
        break;
      case ArchTag::D: {
        close_conv_stage();
        DenseRef d{weight(strfmt("d%02d", static_cast<int>(m.dense_.size())) +
                              ".weight",
                          {term.args[0], feature_rows}),
                   vec(strfmt("d%02d", static_cast<int>(m.dense_.size())) +
                           ".bias",
                       term.args[0])};
        m.dense_.push_back(d);
        feature_rows = term.args[0];
        break;
      }
      case ArchTag::R:
      case ArchTag::L: {
        close_conv_stage();
        m.has_recurrent_ = true;
        m.lstm_cells_ = term.tag == ArchTag::L;
        m.hidden_units_ = term.args[0];
        const int nh = m.hidden_units_;
        const int nv = feature_rows;
        if (!m.lstm_cells_) {
          const std::array<std::pair<StdCellRef*, const char*>, 2> dirs = {
              {{&m.std_fwd_, "fwd"}, {&m.std_bwd_, "bwd"}}};
          for (auto [cell, dir] : dirs) {
            std::string p = std::string("rnn.") + dir + ".";
            cell->w_in = weight(p + "w_in", {nh, nv});
            cell->w_rec = weight(p + "w_rec", {nh, nh});
            cell->bias = vec(p + "bias", nh);
          }
        } else {
          const std::array<std::pair<LstmCellRef*, const char*>, 2> dirs = {
              {{&m.lstm_fwd_, "fwd"}, {&m.lstm_bwd_, "bwd"}}};
          for (auto [cell, dir] : dirs) {
            std::string p = std::string("lstm.") + dir + ".";
            cell->w_ix = weight(p + "w_ix", {nh, nv});
            cell->w_ih = weight(p + "w_ih", {nh, nh});
            cell->peep_i = vec(p + "peep_i", nh);
            cell->b_i = vec(p + "b_i", nh);
            cell->w_fx = weight(p + "w_fx", {nh, nv});
            cell->w_fh = weight(p + "w_fh", {nh, nh});
            cell->peep_f = vec(p + "peep_f", nh);
            cell->b_f = vec(p + "b_f", nh);
            cell->w_ox = weight(p + "w_ox", {nh, nv});
            cell->w_oh = weight(p + "w_oh", {nh, nh});
            cell->peep_o = vec(p + "peep_o", nh);
            cell->b_o = vec(p + "b_o", nh);
            cell->w_cx = weight(p + "w_cx", {nh, nv});
            cell->w_ch = weight(p + "w_ch", {nh, nh});
            cell->b_c = vec(p + "b_c", nh);
          }
        }
        feature_rows = nh;
        break;
      }
      case ArchTag::S: {
        close_conv_stage();
        m.head_in_dim_ = feature_rows;
        m.head_ = DenseRef{weight("head.weight", {n_classes, feature_rows}),
                           vec("head.bias", n_classes)};
        break;
      }
    }
  }
  return m;
}

// ---- forward paths ------------------------------------------------------------

template <typename T>
Tensor<T> Model<T>::conv_stages_frames(const Tensor<T>& x, bool, Rng*) {
  Tensor<T> cur = x;  // [N,C,H,W]
  for (const StageRef& s : stages_) {
    switch (s.kind) {
      case StageRef::Kind::spatial:
        cur = spatial_epilogue(spatial_block(cur, spatial_view(s)), s);
        break;
      case StageRef::Kind::pool2d:
        cur = ops::max_pool2d(cur);
        break;
      default:
        throw UsageError("temporal conv stage in a frame-only forward path");
    }
  }
  return cur;
}

template <typename T>
Tensor<T> Model<T>::conv_stages_sequence(const Tensor<T>& x, bool, Rng*) {
  // x: [B,T,C,H,W]; spatial ops fold (B,T) into one frame axis
  Tensor<T> cur = x;
  for (const StageRef& s : stages_) {
    const int B = cur.dim(0), Tn = cur.dim(1), C = cur.dim(2), H = cur.dim(3),
              W = cur.dim(4);
    switch (s.kind) {
      case StageRef::Kind::spatial: {
        Tensor<T> flat = ops::reshape(cur, Shape{B * Tn, C, H, W});
        Tensor<T> y = spatial_epilogue(spatial_block(flat, spatial_view(s)), s);
        cur = ops::reshape(y, Shape{B, Tn, y.dim(1), H, W});
        break;
      }
      case StageRef::Kind::temporal:
        cur = temporal_block(cur, temporal_view(s));
        break;
      case StageRef::Kind::pool2d: {
        Tensor<T> flat = ops::reshape(cur, Shape{B * Tn, C, H, W});
        Tensor<T> y = ops::max_pool2d(flat);
        cur = ops::reshape(y, Shape{B, Tn, C, y.dim(2), y.dim(3)});
        break;
      }
      case StageRef::Kind::pool3d:
        cur = ops::max_pool3d(cur);
        break;
    }
  }
  return cur;
}

template <typename T>
Tensor<T> Model<T>::dense_stack(const Tensor<T>& x, bool training, Rng* rng) {
  Tensor<T> cur = x;
  Rng dummy;
  for (const DenseRef& d : dense_)
    cur = dense_block(cur, dense_view(d), training, rng ? *rng : dummy);
  return cur;
}

template <typename T>
Tensor<T> Model<T>::head(const Tensor<T>& x, bool training, Rng* rng) {
  Rng dummy;
  Tensor<T> in = recurrent()
                     ? x
                     : ops::dropout(x, kDenseDropout, training, rng ? *rng : dummy);
  return ops::softmax(ops::affine(in, params_.at(head_.weight), params_.at(head_.bias)));
}

template <typename T>
Tensor<T> Model<T>::frame_features(const Tensor<T>& x, bool training, Rng* rng) {
  check_shape(x.ndim() == 4, "frame_features: expected [N,C,H,W], got " +
                                 shape_str(x.shape()));
  Tensor<T> conv = conv_stages_frames(x, training, rng);
  return ops::reshape(conv, Shape{x.dim(0), frame_feature_dim_});
}

template <typename T>
Tensor<T> Model<T>::forward_frames(const Tensor<T>& x, bool training, Rng* rng) {
  check_shape(variant_ == Variant::single,
              "forward_frames is for the single-frame variant");
  Tensor<T> feats = frame_features(x, training, rng);
  return head(dense_stack(feats, training, rng), training, rng);
}

template <typename T>
Tensor<T> Model<T>::forward_window(const Tensor<T>& x, bool training, Rng* rng) {
  check_shape(variant_ == Variant::tpool || variant_ == Variant::tconv,
              "forward_window is for windowed variants");
  check_shape(x.ndim() == 5, "forward_window: expected [B,W,C,H,W'], got " +
                                 shape_str(x.shape()));
  if (variant_ == Variant::tconv)
    check_shape(x.dim(1) == input_.frames,
                strfmt("forward_window: this model is built for %d-frame "
                       "windows, got %d",
                       input_.frames, x.dim(1)));
  Tensor<T> conv = conv_stages_sequence(x, training, rng);
  const int B = conv.dim(0), Tn = conv.dim(1);
  Tensor<T> feats;
  if (has_tpool_) {
    Tensor<T> rows = ops::reshape(conv, Shape{B, Tn, frame_feature_dim_});
    feats = ops::temporal_pool(rows, tpool_mode_ == TPoolMode::mean
                                         ? ops::PoolMode::mean
                                         : ops::PoolMode::max);
  } else {
    feats = ops::reshape(conv, Shape{B, Tn * frame_feature_dim_});
  }
  return head(dense_stack(feats, training, rng), training, rng);
}

template <typename T>
Tensor<T> Model<T>::forward_sequence(const Tensor<T>& x, bool training, Rng* rng) {
  check_shape(recurrent(), "forward_sequence is for recurrent variants");
  check_shape(x.ndim() == 5, "forward_sequence: expected [B,T,C,H,W'], got " +
                                 shape_str(x.shape()));
  Tensor<T> conv = conv_stages_sequence(x, training, rng);
  const int B = conv.dim(0), Tn = conv.dim(1);
  Tensor<T> rows = ops::reshape(conv, Shape{B * Tn, frame_feature_dim_});
  Tensor<T> enc = dense_stack(rows, training, rng);
  Tensor<T> v = ops::reshape(enc, Shape{B, Tn, enc.dim(1)});
  return recurrent_head(v, training, rng);
}

template <typename T>
Tensor<T> Model<T>::recurrent_head(const Tensor<T>& v, bool, Rng*) {
  const int Tn = v.dim(1);
  std::vector<Tensor<T>> steps;
  steps.reserve(static_cast<size_t>(Tn));
  for (int t = 0; t < Tn; ++t) steps.push_back(ops::time_slice(v, t));
  Tensor<T> probs;
  if (lstm_cells_) {
    BidirState<T> state =
        bidirectional_run(steps, lstm_cell_view(lstm_fwd_), lstm_cell_view(lstm_bwd_));
    probs = classify_frames(state, head_view());
  } else {
    BidirState<T> state =
        bidirectional_run(steps, std_cell_view(std_fwd_), std_cell_view(std_bwd_));
    probs = classify_frames(state, head_view());
  }
  return probs;  // [B,T,K]
}

template <typename T>
Model<T> build_model(const ArchSpec& spec, int n_classes, Variant variant,
                     uint64_t seed, BuildOptions opts = {}) {
  return Model<T>::build(spec, n_classes, variant, seed, opts);
}

inline std::vector<std::pair<std::string, Shape>> parameter_shapes(
    const ArchSpec& spec, int n_classes, Variant variant) {
  BuildOptions opts;
  opts.init_params = false;
  Model<float> m = Model<float>::build(spec, n_classes, variant, 0, opts);
  return m.parameters().shapes();
}

}  // namespace fwg
