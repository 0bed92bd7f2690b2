// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Whole-sequence inference. Non-recurrent variants slide a centered window
// with single-frame steps (per-frame conv features are computed once and
// reused where the variant allows it); recurrent variants are fed 64-frame
// windows at stride 32 and only the middle 32 predictions of each window are
// kept, so both directions have state built up wherever a prediction counts.
#pragma once

#include <thread>

#include "fwg/dataio.hpp"
#include "fwg/model.hpp"

namespace fwg {

namespace detail {

inline Tensor<float> chunk_frames(const VideoSequence& seq, int t0, int n) {
  Shape shape = seq.frames.shape();
  shape[0] = n;
  Tensor<float> out(shape);
  const int64_t fs = seq.frames.size() / seq.frames_count();
  std::memcpy(out.data(), seq.frames.data() + static_cast<int64_t>(t0) * fs,
              sizeof(float) * static_cast<size_t>(n * fs));
  return out;
}

// [T,F] per-frame conv features computed in bounded chunks
inline Tensor<float> all_frame_features(Model<float>& model,
                                        const VideoSequence& seq) {
  const int T = seq.frames_count();
  Tensor<float> feats;
  int64_t fdim = 0;
  for (int t0 = 0; t0 < T; t0 += 256) {
    const int n = std::min(256, T - t0);
    Tensor<float> part = model.frame_features(chunk_frames(seq, t0, n), false, nullptr);
    if (!feats.defined()) {
      fdim = part.dim(1);
      feats = Tensor<float>(Shape{T, static_cast<int>(fdim)});
    }
    std::memcpy(feats.data() + static_cast<int64_t>(t0) * fdim, part.data(),
                sizeof(float) * static_cast<size_t>(part.size()));
  }
  return feats;
}

inline Tensor<float> predict_single(Model<float>& model, const VideoSequence& seq) {
  const int T = seq.frames_count();
  Tensor<float> out(Shape{T, model.n_classes()});
  for (int t0 = 0; t0 < T; t0 += 256) {
    const int n = std::min(256, T - t0);
    Tensor<float> probs = model.forward_frames(chunk_frames(seq, t0, n), false, nullptr);
    std::memcpy(out.data() + static_cast<int64_t>(t0) * model.n_classes(),
                probs.data(), sizeof(float) * static_cast<size_t>(probs.size()));
  }
  return out;
}

// Temporal pooling only mixes conv features across the window, so per-frame
// features are cached and pooled per center. Identical math to
// forward_window, much cheaper across overlapping windows.
inline Tensor<float> predict_tpool(Model<float>& model, const VideoSequence& seq,
                                   int window) {
  const int T = seq.frames_count();
  Tensor<float> feats = all_frame_features(model, seq);  // [T,F]
  const int F = feats.dim(1);
  const ops::PoolMode mode = model.spec().find(ArchTag::TPOOL)->pool_mode ==
                                     TPoolMode::mean
                                 ? ops::PoolMode::mean
                                 : ops::PoolMode::max;
  Tensor<float> pooled(Shape{T, F});
  Tensor<float> win(Shape{window, F});
  for (int c = 0; c < T; ++c) {
    for (int j = 0; j < window; ++j) {
      const int t = std::clamp(c - window / 2 + j, 0, T - 1);
      std::memcpy(win.data() + static_cast<int64_t>(j) * F,
                  feats.data() + static_cast<int64_t>(t) * F,
                  sizeof(float) * static_cast<size_t>(F));
    }
    Tensor<float> p = ops::temporal_pool(win, mode);
    std::memcpy(pooled.data() + static_cast<int64_t>(c) * F, p.data(),
                sizeof(float) * static_cast<size_t>(F));
  }
  return model.head(model.dense_stack(pooled, false, nullptr), false, nullptr);
}

inline Tensor<float> predict_tconv(Model<float>& model, const VideoSequence& seq,
                                   int window) {
  const int T = seq.frames_count();
  const int K = model.n_classes();
  const auto& s0 = seq;
  Tensor<float> out(Shape{T, K});
  const int chunk = 32;
  for (int c0 = 0; c0 < T; c0 += chunk) {
    const int n = std::min(chunk, T - c0);
    Tensor<float> wins(
        Shape{n, window, s0.channels(), s0.height(), s0.width()});
    const int64_t item = wins.size() / n;
    for (int i = 0; i < n; ++i) {
      Tensor<float> w = window_at(seq, c0 + i, window);
      std::memcpy(wins.data() + i * item, w.data(),
                  sizeof(float) * static_cast<size_t>(item));
    }
    Tensor<float> probs = model.forward_window(wins, false, nullptr);
    std::memcpy(out.data() + static_cast<int64_t>(c0) * K, probs.data(),
                sizeof(float) * static_cast<size_t>(probs.size()));
  }
  return out;
}

inline Tensor<float> predict_recurrent(Model<float>& model,
                                       const VideoSequence& seq) {
  const int T = seq.frames_count();
  const int K = model.n_classes();
  const int L = kFragmentLen;
  const int stride = kEvalMaskEnd - kEvalMaskBegin;  // 32

  if (T <= L) {
    Fragment f = fragment_at(seq, 0, L);
    Tensor<float> batch = f.frames.viewed(
        Shape{1, L, seq.channels(), seq.height(), seq.width()});
    Tensor<float> probs = model.forward_sequence(batch, false, nullptr);
    Tensor<float> out(Shape{T, K});
    std::memcpy(out.data(), probs.data(),
                sizeof(float) * static_cast<size_t>(T) * K);
    return out;
  }

  std::vector<int> starts;
  for (int s = 0; s + L <= T; s += stride) starts.push_back(s);
  if (starts.back() != T - L) starts.push_back(T - L);

  Tensor<float> out(Shape{T, K});
  int next_unfilled = 0;
  const int batch_cap = 16;
  for (size_t w0 = 0; w0 < starts.size(); w0 += batch_cap) {
    const int nw = static_cast<int>(std::min<size_t>(batch_cap, starts.size() - w0));
    Tensor<float> batch(Shape{nw, L, seq.channels(), seq.height(), seq.width()});
    const int64_t item = batch.size() / nw;
    for (int i = 0; i < nw; ++i) {
      Fragment f = fragment_at(seq, starts[w0 + static_cast<size_t>(i)], L);
      std::memcpy(batch.data() + i * item, f.frames.data(),
                  sizeof(float) * static_cast<size_t>(item));
    }
    Tensor<float> probs = model.forward_sequence(batch, false, nullptr);  // [nw,L,K]
    for (int i = 0; i < nw; ++i) {
      const size_t w = w0 + static_cast<size_t>(i);
      const int s = starts[w];
      const bool first = w == 0;
      const bool last = w + 1 == starts.size();
      const int keep_lo = first ? 0 : std::max(next_unfilled, s + kEvalMaskBegin);
      const int keep_hi = last ? T : s + kEvalMaskEnd;
      for (int t = keep_lo; t < keep_hi; ++t)
        std::memcpy(out.data() + static_cast<int64_t>(t) * K,
                    probs.data() + (static_cast<int64_t>(i) * L + (t - s)) * K,
                    sizeof(float) * static_cast<size_t>(K));
      next_unfilled = keep_hi;
    }
  }
  return out;
}

}  // namespace detail

// Per-frame class probabilities [T, n_classes+1] for one sequence.
inline Tensor<float> predict_sequence(Model<float>& model, const VideoSequence& seq,
                                      int window) {
  check_shape(seq.channels() == model.input().channels,
              strfmt("predict: sequence has %d channels, model wants %d",
                     seq.channels(), model.input().channels));
  switch (model.variant()) {
    case Variant::single:
      return detail::predict_single(model, seq);
    case Variant::tpool:
      return detail::predict_tpool(model, seq, window > 0 ? window : 32);
    case Variant::tconv:
      return detail::predict_tconv(model, seq, model.input().frames);
    default:
      return detail::predict_recurrent(model, seq);
  }
}

// Fan-out across sequences with an ordered merge; each worker runs on its
// own shallow model copy (parameters are shared read-only).
inline std::vector<Tensor<float>> predict_dataset(const Model<float>& model,
                                                  const Dataset& ds, int window,
                                                  int n_threads = 1) {
  std::vector<Tensor<float>> out(ds.sequences.size());
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(ds.sequences.size())));
  auto worker = [&](int tid) {
    Model<float> local = model;
    for (size_t s = static_cast<size_t>(tid); s < ds.sequences.size();
         s += static_cast<size_t>(n_threads))
      out[s] = predict_sequence(local, ds.sequences[s], window);
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker, i);
    for (auto& t : threads) t.join();
  }
  return out;
}

}  // namespace fwg
