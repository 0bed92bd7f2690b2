// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Convolution and pooling ops. Convolutions use the cross-correlation
// convention (no kernel flip) and are lowered to GEMM through an im2col
// buffer; the backward pass rebuilds the buffer instead of saving it, which
// keeps taped activations small.
#pragma once

#include <cstring>
#include <limits>
#include <memory>
#include <vector>

#include "fwg/ops.hpp"

namespace fwg::ops {

enum class Pad { valid, same };
enum class PoolMode { mean, max };

namespace detail {

inline constexpr int64_t kMaxColFloats = int64_t(1) << 22;

// im2col for a chunk of frames. x: [N,C,H,W] starting at frame n0,
// col: [C*kh*kw, chunk*Ho*Wo].
template <typename T>
void im2col_spatial(const T* x, int C, int H, int W, int n0, int chunk,
                    int kh, int kw, int pad_h, int pad_w, int Ho, int Wo,
                    T* col) {
  const int64_t cols = static_cast<int64_t>(chunk) * Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const int r = (c * kh + ki) * kw + kj;
        T* dst_row = col + r * cols;
        const int sj0 = kj - pad_w;  // source column for output column 0
        const int oj_lo = std::max(0, -sj0);
        const int oj_hi = std::min(Wo, W - sj0);
        for (int nn = 0; nn < chunk; ++nn) {
          const T* frame = x + ((static_cast<int64_t>(n0 + nn) * C + c) * H) * W;
          for (int oi = 0; oi < Ho; ++oi) {
            T* dst = dst_row + (static_cast<int64_t>(nn) * Ho + oi) * Wo;
            const int si = oi + ki - pad_h;
            if (si < 0 || si >= H || oj_lo >= oj_hi) {
              std::memset(dst, 0, sizeof(T) * static_cast<size_t>(Wo));
              continue;
            }
            if (oj_lo > 0) std::memset(dst, 0, sizeof(T) * static_cast<size_t>(oj_lo));
            std::memcpy(dst + oj_lo, frame + static_cast<int64_t>(si) * W + sj0 + oj_lo,
                        sizeof(T) * static_cast<size_t>(oj_hi - oj_lo));
            if (oj_hi < Wo)
              std::memset(dst + oj_hi, 0, sizeof(T) * static_cast<size_t>(Wo - oj_hi));
          }
        }
      }
}

// Scatter-add of a column gradient back onto the input frames.
template <typename T>
void col2im_spatial(const T* col, int C, int H, int W, int n0, int chunk,
                    int kh, int kw, int pad_h, int pad_w, int Ho, int Wo,
                    T* gx) {
  const int64_t cols = static_cast<int64_t>(chunk) * Ho * Wo;
  for (int c = 0; c < C; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const int r = (c * kh + ki) * kw + kj;
        const T* src_row = col + r * cols;
        const int sj0 = kj - pad_w;
        const int oj_lo = std::max(0, -sj0);
        const int oj_hi = std::min(Wo, W - sj0);
        if (oj_lo >= oj_hi) continue;
        for (int nn = 0; nn < chunk; ++nn) {
          T* frame = gx + ((static_cast<int64_t>(n0 + nn) * C + c) * H) * W;
          for (int oi = 0; oi < Ho; ++oi) {
            const int si = oi + ki - pad_h;
            if (si < 0 || si >= H) continue;
            const T* src = src_row + (static_cast<int64_t>(nn) * Ho + oi) * Wo;
            T* dst = frame + static_cast<int64_t>(si) * W + sj0;
            for (int oj = oj_lo; oj < oj_hi; ++oj) dst[oj] += src[oj];
          }
        }
      }
}

// im2col over the time axis for one sequence. x_b: [T,M,P],
// col: [M*L, To*P].
template <typename T>
void im2col_temporal(const T* x_b, int Tn, int M, int P, int L, int pad,
                     int To, T* col) {
  for (int m = 0; m < M; ++m)
    for (int l = 0; l < L; ++l) {
      T* dst_row = col + (static_cast<int64_t>(m) * L + l) * To * P;
      for (int t = 0; t < To; ++t) {
        const int st = t + l - pad;
        T* dst = dst_row + static_cast<int64_t>(t) * P;
        if (st < 0 || st >= Tn) {
          std::memset(dst, 0, sizeof(T) * static_cast<size_t>(P));
        } else {
          std::memcpy(dst, x_b + (static_cast<int64_t>(st) * M + m) * P,
                      sizeof(T) * static_cast<size_t>(P));
        }
      }
    }
}

template <typename T>
void col2im_temporal(const T* col, int Tn, int M, int P, int L, int pad,
                     int To, T* gx_b) {
  for (int m = 0; m < M; ++m)
    for (int l = 0; l < L; ++l) {
      const T* src_row = col + (static_cast<int64_t>(m) * L + l) * To * P;
      for (int t = 0; t < To; ++t) {
        const int st = t + l - pad;
        if (st < 0 || st >= Tn) continue;
        const T* src = src_row + static_cast<int64_t>(t) * P;
        T* dst = gx_b + (static_cast<int64_t>(st) * M + m) * P;
        for (int p = 0; p < P; ++p) dst[p] += src[p];
      }
    }
}

}  // namespace detail

// 2-D convolution over the trailing H,W axes, shared across any leading
// frame axis. x: [C,H,W] or [N,C,H,W]; kernels: [K,C,kh,kw].
// mode same keeps H,W (odd kernel required); valid shrinks to H-kh+1.
// No bias, no nonlinearity.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, Pad mode) {
  check_shape(x.ndim() == 3 || x.ndim() == 4,
              "conv2d: expected [C,H,W] or [N,C,H,W], got " + shape_str(x.shape()));
  check_shape(kernels.ndim() == 4,
              "conv2d: expected kernels [K,C,kh,kw], got " + shape_str(kernels.shape()));
  const bool batched = x.ndim() == 4;
  const int N = batched ? x.dim(0) : 1;
  const int C = batched ? x.dim(1) : x.dim(0);
  const int H = batched ? x.dim(2) : x.dim(1);
  const int W = batched ? x.dim(3) : x.dim(2);
  const int Kc = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  check_shape(kernels.dim(1) == C,
              "conv2d: input " + shape_str(x.shape()) + " vs kernels " +
                  shape_str(kernels.shape()) + " channel mismatch");
  int pad_h = 0, pad_w = 0, Ho, Wo;
  if (mode == Pad::same) {
    check_shape(kh % 2 == 1 && kw % 2 == 1, "conv2d same: kernel extent must be odd");
    pad_h = (kh - 1) / 2;
    pad_w = (kw - 1) / 2;
    Ho = H;
    Wo = W;
  } else {
    Ho = H - kh + 1;
    Wo = W - kw + 1;
    check_shape(Ho >= 1 && Wo >= 1, "conv2d valid: kernel " + shape_str(kernels.shape()) +
                                        " larger than input " + shape_str(x.shape()));
  }
  const int R = C * kh * kw;
  Tensor<T> out(batched ? Shape{N, Kc, Ho, Wo} : Shape{Kc, Ho, Wo});
  const int64_t hw = static_cast<int64_t>(Ho) * Wo;
  const int chunk_max = static_cast<int>(std::max<int64_t>(
      1, detail::kMaxColFloats / std::max<int64_t>(1, static_cast<int64_t>(R) * hw)));

  {
    std::vector<T> col;
    std::vector<T> ychunk;
    for (int n0 = 0; n0 < N; n0 += chunk_max) {
      const int chunk = std::min(chunk_max, N - n0);
      const int64_t cols = chunk * hw;
      col.resize(static_cast<size_t>(R) * cols);
      ychunk.resize(static_cast<size_t>(Kc) * cols);
      detail::im2col_spatial(x.data(), C, H, W, n0, chunk, kh, kw, pad_h, pad_w,
                             Ho, Wo, col.data());
      gemm_nn(kernels.data(), col.data(), ychunk.data(), Kc, R,
              static_cast<int>(cols), false);
      for (int nn = 0; nn < chunk; ++nn)
        for (int k = 0; k < Kc; ++k)
          std::memcpy(out.data() + ((static_cast<int64_t>(n0 + nn) * Kc + k) * hw),
                      ychunk.data() + k * cols + nn * hw,
                      sizeof(T) * static_cast<size_t>(hw));
    }
  }

  if (Tape<T>* tape = Tape<T>::joint({&x, &kernels})) {
    int nx = x.node(), nk = kernels.node(), no = tape->track(out);
    auto sx = x.storage();
    auto sk = kernels.storage();
    tape->record("conv2d", {nx, nk}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      std::vector<T> col, dy;
      for (int n0 = 0; n0 < N; n0 += chunk_max) {
        const int chunk = std::min(chunk_max, N - n0);
        const int64_t cols = chunk * hw;
        dy.resize(static_cast<size_t>(Kc) * cols);
        for (int nn = 0; nn < chunk; ++nn)
          for (int k = 0; k < Kc; ++k)
            std::memcpy(dy.data() + k * cols + nn * hw,
                        go.data() + ((static_cast<int64_t>(n0 + nn) * Kc + k) * hw),
                        sizeof(T) * static_cast<size_t>(hw));
        if (nk >= 0) {
          col.resize(static_cast<size_t>(R) * cols);
          detail::im2col_spatial(sx->data(), C, H, W, n0, chunk, kh, kw, pad_h,
                                 pad_w, Ho, Wo, col.data());
          gemm_nt(dy.data(), col.data(), tp.grad(nk).data(), Kc,
                  static_cast<int>(cols), R, true);
        }
        if (nx >= 0) {
          col.resize(static_cast<size_t>(R) * cols);
          gemm_tn(sk->data(), dy.data(), col.data(), R, Kc,
                  static_cast<int>(cols), false);
          detail::col2im_spatial(col.data(), C, H, W, n0, chunk, kh, kw, pad_h,
                                 pad_w, Ho, Wo, tp.grad(nx).data());
        }
      }
    });
  }
  return out;
}

// 1-D convolution across time, applied independently at every trailing
// position. x: [T,M] or [B,T,M,P]; kernels: [K,M,L]. Bias and activation are
// the caller's job.
template <typename T>
Tensor<T> conv1d_temporal(const Tensor<T>& x, const Tensor<T>& kernels, Pad mode) {
  check_shape(x.ndim() == 2 || x.ndim() == 4,
              "conv1d_temporal: expected [T,M] or [B,T,M,P], got " + shape_str(x.shape()));
  check_shape(kernels.ndim() == 3,
              "conv1d_temporal: expected kernels [K,M,L], got " + shape_str(kernels.shape()));
  const bool batched = x.ndim() == 4;
  const int B = batched ? x.dim(0) : 1;
  const int Tn = batched ? x.dim(1) : x.dim(0);
  const int M = batched ? x.dim(2) : x.dim(1);
  const int P = batched ? x.dim(3) : 1;
  const int Kc = kernels.dim(0), L = kernels.dim(2);
  check_shape(kernels.dim(1) == M,
              "conv1d_temporal: input " + shape_str(x.shape()) + " vs kernels " +
                  shape_str(kernels.shape()) + " channel mismatch");
  check_shape(L >= 1, "conv1d_temporal: empty kernel");
  int pad = 0, To;
  if (mode == Pad::same) {
    check_shape(L % 2 == 1, "conv1d_temporal same: kernel length must be odd");
    pad = (L - 1) / 2;
    To = Tn;
  } else {
    To = Tn - L + 1;
    check_shape(To >= 1, "conv1d_temporal valid: kernel length " + std::to_string(L) +
                             " exceeds " + std::to_string(Tn) + " frames");
  }
  const int R = M * L;
  Tensor<T> out(batched ? Shape{B, To, Kc, P} : Shape{To, Kc});
  const int64_t in_b = static_cast<int64_t>(Tn) * M * P;
  const int64_t out_b = static_cast<int64_t>(To) * Kc * P;
  {
    std::vector<T> col(static_cast<size_t>(R) * To * P);
    std::vector<T> yb(static_cast<size_t>(Kc) * To * P);
    for (int b = 0; b < B; ++b) {
      detail::im2col_temporal(x.data() + b * in_b, Tn, M, P, L, pad, To, col.data());
      gemm_nn(kernels.data(), col.data(), yb.data(), Kc, R, To * P, false);
      T* ob = out.data() + b * out_b;
      for (int t = 0; t < To; ++t)
        for (int k = 0; k < Kc; ++k)
          std::memcpy(ob + (static_cast<int64_t>(t) * Kc + k) * P,
                      yb.data() + (static_cast<int64_t>(k) * To + t) * P,
                      sizeof(T) * static_cast<size_t>(P));
    }
  }

  if (Tape<T>* tape = Tape<T>::joint({&x, &kernels})) {
    int nx = x.node(), nk = kernels.node(), no = tape->track(out);
    auto sx = x.storage();
    auto sk = kernels.storage();
    tape->record("conv1d_temporal", {nx, nk}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      std::vector<T> col(static_cast<size_t>(R) * To * P);
      std::vector<T> dyb(static_cast<size_t>(Kc) * To * P);
      for (int b = 0; b < B; ++b) {
        const T* gob = go.data() + b * out_b;
        for (int t = 0; t < To; ++t)
          for (int k = 0; k < Kc; ++k)
            std::memcpy(dyb.data() + (static_cast<int64_t>(k) * To + t) * P,
                        gob + (static_cast<int64_t>(t) * Kc + k) * P,
                        sizeof(T) * static_cast<size_t>(P));
        if (nk >= 0) {
          detail::im2col_temporal(sx->data() + b * in_b, Tn, M, P, L, pad, To,
                                  col.data());
          gemm_nt(dyb.data(), col.data(), tp.grad(nk).data(), Kc, To * P, R, true);
        }
        if (nx >= 0) {
          gemm_tn(sk->data(), dyb.data(), col.data(), R, Kc, To * P, false);
          detail::col2im_temporal(col.data(), Tn, M, P, L, pad, To,
                                  tp.grad(nx).data() + b * in_b);
        }
      }
    });
  }
  return out;
}

// Max-pooling over non-overlapping 2x2 spatial blocks. Odd extents are
// handled by clamping the window at the border; extents of 1 pass through.
// The backward pass routes each block's gradient to the first maximal
// element in row-major scan order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  check_shape(x.ndim() == 3 || x.ndim() == 4,
              "max_pool2d: expected [C,H,W] or [N,C,H,W], got " + shape_str(x.shape()));
  const bool batched = x.ndim() == 4;
  const int N = batched ? x.dim(0) : 1;
  const int C = batched ? x.dim(1) : x.dim(0);
  const int H = batched ? x.dim(2) : x.dim(1);
  const int W = batched ? x.dim(3) : x.dim(2);
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor<T> out(batched ? Shape{N, C, Ho, Wo} : Shape{C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.size()));
  const T* px = x.data();
  T* po = out.data();
  int64_t oidx = 0;
  for (int64_t nc = 0; nc < static_cast<int64_t>(N) * C; ++nc) {
    const T* plane = px + nc * H * W;
    for (int oi = 0; oi < Ho; ++oi)
      for (int oj = 0; oj < Wo; ++oj) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_at = -1;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const int si = std::min(2 * oi + di, H - 1);
            const int sj = std::min(2 * oj + dj, W - 1);
            const int64_t at = static_cast<int64_t>(si) * W + sj;
            if (plane[at] > best) {
              best = plane[at];
              best_at = nc * H * W + at;
            }
          }
        po[oidx] = best;
        (*argmax)[static_cast<size_t>(oidx)] = best_at;
        ++oidx;
      }
  }
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("max_pool2d", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (size_t i = 0; i < go.size(); ++i)
        gx[static_cast<size_t>((*argmax)[i])] += go[i];
    });
  }
  return out;
}

// Max-pooling over non-overlapping 2x2x2 blocks of (T,H,W); ties break to
// the first candidate in time-major, then row-major order.
template <typename T>
Tensor<T> max_pool3d(const Tensor<T>& x) {
  check_shape(x.ndim() == 4 || x.ndim() == 5,
              "max_pool3d: expected [T,C,H,W] or [B,T,C,H,W], got " + shape_str(x.shape()));
  const bool batched = x.ndim() == 5;
  const int B = batched ? x.dim(0) : 1;
  const int Tn = batched ? x.dim(1) : x.dim(0);
  const int C = batched ? x.dim(2) : x.dim(1);
  const int H = batched ? x.dim(3) : x.dim(2);
  const int W = batched ? x.dim(4) : x.dim(3);
  const int To = (Tn + 1) / 2, Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  Tensor<T> out(batched ? Shape{B, To, C, Ho, Wo} : Shape{To, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.size()));
  const T* px = x.data();
  T* po = out.data();
  auto src_at = [&](int b, int t, int c, int i, int j) {
    return (((static_cast<int64_t>(b) * Tn + t) * C + c) * H + i) * W + j;
  };
  int64_t oidx = 0;
  for (int b = 0; b < B; ++b)
    for (int ot = 0; ot < To; ++ot)
      for (int c = 0; c < C; ++c)
        for (int oi = 0; oi < Ho; ++oi)
          for (int oj = 0; oj < Wo; ++oj) {
            T best = -std::numeric_limits<T>::infinity();
            int64_t best_at = -1;
            for (int dt = 0; dt < 2; ++dt)
              for (int di = 0; di < 2; ++di)
                for (int dj = 0; dj < 2; ++dj) {
                  const int st = std::min(2 * ot + dt, Tn - 1);
                  const int si = std::min(2 * oi + di, H - 1);
                  const int sj = std::min(2 * oj + dj, W - 1);
                  const int64_t at = src_at(b, st, c, si, sj);
                  if (px[at] > best) {
                    best = px[at];
                    best_at = at;
                  }
                }
            po[oidx] = best;
            (*argmax)[static_cast<size_t>(oidx)] = best_at;
            ++oidx;
          }
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("max_pool3d", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (size_t i = 0; i < go.size(); ++i)
        gx[static_cast<size_t>((*argmax)[i])] += go[i];
    });
  }
  return out;
}

// Mean- or max-reduction of per-frame features across all frames.
// x: [T,F] -> [F] or [B,T,F] -> [B,F].
template <typename T>
Tensor<T> temporal_pool(const Tensor<T>& x, PoolMode mode) {
  check_shape(x.ndim() == 2 || x.ndim() == 3,
              "temporal_pool: expected [T,F] or [B,T,F], got " + shape_str(x.shape()));
  const bool batched = x.ndim() == 3;
  const int B = batched ? x.dim(0) : 1;
  const int Tn = batched ? x.dim(1) : x.dim(0);
  const int F = batched ? x.dim(2) : x.dim(1);
  if (Tn < 1) throw UsageError("temporal_pool: empty time axis");
  Tensor<T> out(batched ? Shape{B, F} : Shape{F});
  const T* px = x.data();
  T* po = out.data();
  std::shared_ptr<std::vector<int>> argmax;
  if (mode == PoolMode::mean) {
    const T inv = T(1) / static_cast<T>(Tn);
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F; ++f) {
        T acc = T(0);
        for (int t = 0; t < Tn; ++t)
          acc += px[(static_cast<int64_t>(b) * Tn + t) * F + f];
        po[static_cast<int64_t>(b) * F + f] = acc * inv;
      }
  } else {
    argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(out.size()));
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < F; ++f) {
        T best = px[static_cast<int64_t>(b) * Tn * F + f];
        int best_t = 0;
        for (int t = 1; t < Tn; ++t) {
          T v = px[(static_cast<int64_t>(b) * Tn + t) * F + f];
          if (v > best) {
            best = v;
            best_t = t;
          }
        }
        po[static_cast<int64_t>(b) * F + f] = best;
        (*argmax)[static_cast<size_t>(b) * F + f] = best_t;
      }
  }
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("temporal_pool", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      if (mode == PoolMode::mean) {
        const T inv = T(1) / static_cast<T>(Tn);
        for (int b = 0; b < B; ++b)
          for (int t = 0; t < Tn; ++t)
            for (int f = 0; f < F; ++f)
              gx[(static_cast<size_t>(b) * Tn + t) * F + f] +=
                  go[static_cast<size_t>(b) * F + f] * inv;
      } else {
        for (int b = 0; b < B; ++b)
          for (int f = 0; f < F; ++f) {
            int t = (*argmax)[static_cast<size_t>(b) * F + f];
            gx[(static_cast<size_t>(b) * Tn + t) * F + f] +=
                go[static_cast<size_t>(b) * F + f];
          }
      }
    });
  }
  return out;
}

// Per-channel bias over a [B,T,K,P] feature block.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  check_shape(x.ndim() == 4, "add_channel_bias: expected [B,T,K,P], got " +
                                 shape_str(x.shape()));
  const int B = x.dim(0), Tn = x.dim(1), K = x.dim(2), P = x.dim(3);
  check_shape(bias.ndim() == 1 && bias.dim(0) == K,
              "add_channel_bias: bias " + shape_str(bias.shape()) +
                  " does not match " + std::to_string(K) + " channels");
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pb = bias.data();
  T* po = out.data();
  int64_t idx = 0;
  for (int64_t bt = 0; bt < static_cast<int64_t>(B) * Tn; ++bt)
    for (int k = 0; k < K; ++k) {
      const T bk = pb[k];
      for (int p = 0; p < P; ++p, ++idx) po[idx] = px[idx] + bk;
    }
  if (Tape<T>* tape = Tape<T>::joint({&x, &bias})) {
    int nx = x.node(), nb = bias.node(), no = tape->track(out);
    tape->record("add_channel_bias", {nx, nb}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (nx >= 0) {
        auto& gx = tp.grad(nx);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (nb >= 0) {
        auto& gb = tp.grad(nb);
        size_t idx2 = 0;
        for (int64_t bt = 0; bt < static_cast<int64_t>(B) * Tn; ++bt)
          for (int k = 0; k < K; ++k) {
            T acc = T(0);
            for (int p = 0; p < P; ++p, ++idx2) acc += go[idx2];
            gb[static_cast<size_t>(k)] += acc;
          }
      }
    });
  }
  return out;
}

}  // namespace fwg::ops
