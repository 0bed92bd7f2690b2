// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Recurrent cells and the bidirectional driver. Two cell types: a standard
// tanh cell and an LSTM cell with peephole connections (input and forget
// gates read the previous cell state, the output gate reads the fresh one).
// Inputs may be single vectors [n] or row batches [B,n].
#pragma once

#include <vector>

#include "fwg/ops.hpp"

namespace fwg {

template <typename T>
struct RnnStandardCell {
  Tensor<T> w_in;   // [n_h, n_v]
  Tensor<T> w_rec;  // [n_h, n_h]
  Tensor<T> bias;   // [n_h]

  int hidden_units() const { return w_in.dim(0); }
  int input_units() const { return w_in.dim(1); }
  bool has_cell_state() const { return false; }

  void validate() const {
    check_shape(w_rec.ndim() == 2 && w_rec.dim(0) == w_rec.dim(1) &&
                    w_rec.dim(0) == hidden_units(),
                "standard cell: recurrence matrix must be square n_h x n_h");
    check_shape(bias.dim(0) == hidden_units(), "standard cell: bias size mismatch");
  }
};

template <typename T>
struct LstmPeepholeCell {
  // gate order: input, forget, output, candidate
  Tensor<T> w_ix, w_ih, peep_i, b_i;
  Tensor<T> w_fx, w_fh, peep_f, b_f;
  Tensor<T> w_ox, w_oh, peep_o, b_o;
  Tensor<T> w_cx, w_ch, b_c;

  int hidden_units() const { return w_ix.dim(0); }
  int input_units() const { return w_ix.dim(1); }
  bool has_cell_state() const { return true; }

  void validate() const {
    const int nh = hidden_units();
    for (const Tensor<T>* m : {&w_ih, &w_fh, &w_oh, &w_ch})
      check_shape(m->ndim() == 2 && m->dim(0) == nh && m->dim(1) == nh,
                  "lstm cell: recurrence matrices must be n_h x n_h");
    for (const Tensor<T>* v : {&peep_i, &peep_f, &peep_o, &b_i, &b_f, &b_o, &b_c})
      check_shape(v->ndim() == 1 && v->dim(0) == nh,
                  "lstm cell: peepholes and biases must have length n_h");
  }
};

// h_t = tanh(W_in v_t + W_rec h_prev + b)
template <typename T>
Tensor<T> standard_step(const Tensor<T>& v_t, const Tensor<T>& h_prev,
                        const RnnStandardCell<T>& cell) {
  Tensor<T> pre = ops::add(ops::affine(v_t, cell.w_in, cell.bias),
                           ops::linear(h_prev, cell.w_rec));
  return ops::tanh_op(pre);
}

template <typename T>
struct LstmStepOut {
  Tensor<T> h;
  Tensor<T> c;
};

template <typename T>
LstmStepOut<T> lstm_step(const Tensor<T>& v_t, const Tensor<T>& h_prev,
                         const Tensor<T>& c_prev, const LstmPeepholeCell<T>& cell) {
  using namespace ops;
  Tensor<T> i = sigmoid(add(add(affine(v_t, cell.w_ix, cell.b_i),
                                linear(h_prev, cell.w_ih)),
                            rowwise_mul(c_prev, cell.peep_i)));
  Tensor<T> f = sigmoid(add(add(affine(v_t, cell.w_fx, cell.b_f),
                                linear(h_prev, cell.w_fh)),
                            rowwise_mul(c_prev, cell.peep_f)));
  Tensor<T> g = tanh_op(add(affine(v_t, cell.w_cx, cell.b_c),
                            linear(h_prev, cell.w_ch)));
  Tensor<T> c = add(mul(f, c_prev), mul(i, g));
  Tensor<T> o = sigmoid(add(add(affine(v_t, cell.w_ox, cell.b_o),
                                linear(h_prev, cell.w_oh)),
                            rowwise_mul(c, cell.peep_o)));
  return {mul(o, tanh_op(c)), c};
}

// Hidden (and, for LSTM, cell-state) sequences of both directions.
template <typename T>
struct BidirState {
  std::vector<Tensor<T>> h_f, h_b;
  std::vector<Tensor<T>> c_f, c_b;  // empty for standard cells
  int steps() const { return static_cast<int>(h_f.size()); }
};

namespace detail {

template <typename T>
Tensor<T> zero_like_step(const Tensor<T>& v0, int n_h) {
  if (v0.ndim() == 2) return Tensor<T>(Shape{v0.dim(0), n_h});
  return Tensor<T>(Shape{n_h});
}

template <typename T>
void run_direction(const std::vector<Tensor<T>>& v, const RnnStandardCell<T>& cell,
                   bool forward, std::vector<Tensor<T>>& h_out,
                   std::vector<Tensor<T>>* /*c_out*/) {
  const int Tn = static_cast<int>(v.size());
  h_out.resize(static_cast<size_t>(Tn));
  Tensor<T> h = zero_like_step(v[0], cell.hidden_units());
  for (int s = 0; s < Tn; ++s) {
    const int t = forward ? s : Tn - 1 - s;
    h = standard_step(v[static_cast<size_t>(t)], h, cell);
    h_out[static_cast<size_t>(t)] = h;
  }
}

template <typename T>
void run_direction(const std::vector<Tensor<T>>& v, const LstmPeepholeCell<T>& cell,
                   bool forward, std::vector<Tensor<T>>& h_out,
                   std::vector<Tensor<T>>* c_out) {
  const int Tn = static_cast<int>(v.size());
  h_out.resize(static_cast<size_t>(Tn));
  if (c_out) c_out->resize(static_cast<size_t>(Tn));
  Tensor<T> h = zero_like_step(v[0], cell.hidden_units());
  Tensor<T> c = zero_like_step(v[0], cell.hidden_units());
  for (int s = 0; s < Tn; ++s) {
    const int t = forward ? s : Tn - 1 - s;
    auto out = lstm_step(v[static_cast<size_t>(t)], h, c, cell);
    h = out.h;
    c = out.c;
    h_out[static_cast<size_t>(t)] = h;
    if (c_out) (*c_out)[static_cast<size_t>(t)] = c;
  }
}

}  // namespace detail

// Runs the forward pass t=1..T with h_{t-1} and the backward pass t=T..1
// with h_{t+1}, both from zero initial state.
template <typename T, template <typename> class Cell>
BidirState<T> bidirectional_run(const std::vector<Tensor<T>>& v,
                                const Cell<T>& fwd_cell, const Cell<T>& bwd_cell) {
  if (v.empty()) throw UsageError("bidirectional_run: empty input sequence");
  check_shape(fwd_cell.hidden_units() == bwd_cell.hidden_units(),
              "bidirectional_run: directions disagree on hidden size");
  BidirState<T> state;
  detail::run_direction(v, fwd_cell, true, state.h_f,
                        fwd_cell.has_cell_state() ? &state.c_f : nullptr);
  detail::run_direction(v, bwd_cell, false, state.h_b,
                        bwd_cell.has_cell_state() ? &state.c_b : nullptr);
  return state;
}

// Per-frame softmax over W_y (h_f + h_b) + b_y, one shared head for every t.
template <typename T>
struct ClassifierHead {
  Tensor<T> weight;  // [n_classes, n_h]
  Tensor<T> bias;    // [n_classes]
  int classes() const { return weight.dim(0); }
};

// Returns [T,K] for vector steps or [B,T,K] for batched steps.
template <typename T>
Tensor<T> classify_frames(const BidirState<T>& state, const ClassifierHead<T>& head) {
  check_shape(state.h_f.size() == state.h_b.size() && !state.h_f.empty(),
              "classify_frames: incomplete bidirectional state");
  const int Tn = state.steps();
  const bool batched = state.h_f[0].ndim() == 2;
  std::vector<Tensor<T>> probs;
  probs.reserve(static_cast<size_t>(Tn));
  for (int t = 0; t < Tn; ++t) {
    Tensor<T> summed = ops::add(state.h_f[static_cast<size_t>(t)],
                                state.h_b[static_cast<size_t>(t)]);
    probs.push_back(ops::softmax(ops::affine(summed, head.weight, head.bias)));
  }
  Tensor<T> stacked = ops::stack_time(probs);  // [B,T,K]
  if (!batched) return ops::reshape(stacked, Shape{Tn, head.classes()});
  return stacked;
}

}  // namespace fwg
