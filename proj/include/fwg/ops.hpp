// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops: elementwise maps, affine/linear algebra,
// softmax, reductions, shape plumbing, dropout and cross-entropy.
// Convolutions and pooling live in conv.hpp.
//
// Every op computes its forward value eagerly and, when an input is attached
// to a tape, records a backward closure. Inputs that are not attached flow
// through as constants.
#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "fwg/rng.hpp"
#include "fwg/tape.hpp"
#include "fwg/tensor.hpp"

namespace fwg::ops {

// ---- Eigen-backed GEMM kernels ------------------------------------------
// All buffers row-major. C (+)= op(A) · op(B).

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void gemm_nn(const T* A, const T* B, T* C, int m, int k, int n, bool acc) {
  CMap<T> a(A, m, k);
  CMap<T> b(B, k, n);
  Map<T> c(C, m, n);
  if (acc)
    c.noalias() += a * b;
  else
    c.noalias() = a * b;
}

// A is stored k×m, used transposed
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, int m, int k, int n, bool acc) {
  CMap<T> a(A, k, m);
  CMap<T> b(B, k, n);
  Map<T> c(C, m, n);
  if (acc)
    c.noalias() += a.transpose() * b;
  else
    c.noalias() = a.transpose() * b;
}

// B is stored n×k, used transposed
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, int m, int k, int n, bool acc) {
  CMap<T> a(A, m, k);
  CMap<T> b(B, n, k);
  Map<T> c(C, m, n);
  if (acc)
    c.noalias() += a * b.transpose();
  else
    c.noalias() = a * b.transpose();
}

// ---- elementwise binary --------------------------------------------------

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                             const char* op) {
  check_shape(a.shape() == b.shape(),
              std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                  " vs " + shape_str(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  if (Tape<T>* tape = Tape<T>::joint({&a, &b})) {
    int na = a.node(), nb = b.node(), no = tape->track(out);
    tape->record("add", {na, nb}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (na >= 0) {
        auto& ga = tp.grad(na);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (nb >= 0) {
        auto& gb = tp.grad(nb);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] - pb[i];
  if (Tape<T>* tape = Tape<T>::joint({&a, &b})) {
    int na = a.node(), nb = b.node(), no = tape->track(out);
    tape->record("sub", {na, nb}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (na >= 0) {
        auto& ga = tp.grad(na);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (nb >= 0) {
        auto& gb = tp.grad(nb);
        for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

// Hadamard product
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] * pb[i];
  if (Tape<T>* tape = Tape<T>::joint({&a, &b})) {
    int na = a.node(), nb = b.node(), no = tape->track(out);
    auto sa = a.storage(), sb = b.storage();
    tape->record("mul", {na, nb}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (na >= 0) {
        auto& ga = tp.grad(na);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * (*sb)[i];
      }
      if (nb >= 0) {
        auto& gb = tp.grad(nb);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * (*sa)[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] * s;
  if (Tape<T>* tape = Tape<T>::joint({&a})) {
    int na = a.node(), no = tape->track(out);
    tape->record("scale", {na}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& ga = tp.grad(na);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    });
  }
  return out;
}

// ---- elementwise nonlinearities ------------------------------------------

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T alpha = T(0.3)) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < x.size(); ++i)
    po[i] = px[i] >= T(0) ? px[i] : alpha * px[i];
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    auto sx = x.storage();
    tape->record("leaky_relu", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (size_t i = 0; i < go.size(); ++i)
        gx[i] += go[i] * ((*sx)[i] >= T(0) ? T(1) : alpha);
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < x.size(); ++i) {
    T v = px[i];
    if (v >= T(0)) {
      po[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      T e = std::exp(v);
      po[i] = e / (T(1) + e);
    }
  }
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    auto so = out.storage();
    tape->record("sigmoid", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (size_t i = 0; i < go.size(); ++i) {
        T y = (*so)[i];
        gx[i] += go[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> tanh_op(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < x.size(); ++i) po[i] = std::tanh(px[i]);
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    auto so = out.storage();
    tape->record("tanh", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (size_t i = 0; i < go.size(); ++i) {
        T y = (*so)[i];
        gx[i] += go[i] * (T(1) - y * y);
      }
    });
  }
  return out;
}

// ---- affine / broadcast --------------------------------------------------

// Rows of a 1-D or 2-D tensor: [n] acts as one row.
template <typename T>
inline std::pair<int, int> row_view(const Tensor<T>& x, const char* op) {
  if (x.ndim() == 1) return {1, x.dim(0)};
  if (x.ndim() == 2) return {x.dim(0), x.dim(1)};
  throw ShapeError(std::string(op) + ": expected 1-D or 2-D input, got " +
                   shape_str(x.shape()));
}

// weight·x + bias, applied per row of x. x: [n] or [B,n], weight: [m,n],
// bias: [m]; result [m] or [B,m].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  auto [B, n] = row_view(x, "affine");
  check_shape(weight.ndim() == 2 && weight.dim(1) == n,
              "affine: weight " + shape_str(weight.shape()) +
                  " does not match input " + shape_str(x.shape()));
  int m = weight.dim(0);
  check_shape(bias.ndim() == 1 && bias.dim(0) == m,
              "affine: bias " + shape_str(bias.shape()) + " does not match " +
                  std::to_string(m) + " outputs");
  Tensor<T> out(x.ndim() == 1 ? Shape{m} : Shape{B, m});
  // out = x · Wᵀ, then add bias per row
  gemm_nt(x.data(), weight.data(), out.data(), B, n, m, false);
  T* po = out.data();
  const T* pb = bias.data();
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < m; ++i) po[static_cast<int64_t>(b) * m + i] += pb[i];
  if (Tape<T>* tape = Tape<T>::joint({&x, &weight, &bias})) {
    int nx = x.node(), nw = weight.node(), nb = bias.node();
    int no = tape->track(out);
    auto sx = x.storage(), sw = weight.storage();
    tape->record("affine", {nx, nw, nb}, no, [=, B = B, n = n](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (nx >= 0) gemm_nn(go.data(), sw->data(), tp.grad(nx).data(), B, m, n, true);
      if (nw >= 0) gemm_tn(go.data(), sx->data(), tp.grad(nw).data(), m, B, n, true);
      if (nb >= 0) {
        auto& gb = tp.grad(nb);
        for (int b = 0; b < B; ++b)
          for (int i = 0; i < m; ++i) gb[static_cast<size_t>(i)] += go[static_cast<size_t>(b) * m + i];
      }
    });
  }
  return out;
}

// weight·x without bias; shapes as in affine.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight) {
  auto [B, n] = row_view(x, "linear");
  check_shape(weight.ndim() == 2 && weight.dim(1) == n,
              "linear: weight " + shape_str(weight.shape()) +
                  " does not match input " + shape_str(x.shape()));
  int m = weight.dim(0);
  Tensor<T> out(x.ndim() == 1 ? Shape{m} : Shape{B, m});
  gemm_nt(x.data(), weight.data(), out.data(), B, n, m, false);
  if (Tape<T>* tape = Tape<T>::joint({&x, &weight})) {
    int nx = x.node(), nw = weight.node(), no = tape->track(out);
    auto sx = x.storage(), sw = weight.storage();
    tape->record("linear", {nx, nw}, no, [=, B = B, n = n](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (nx >= 0) gemm_nn(go.data(), sw->data(), tp.grad(nx).data(), B, m, n, true);
      if (nw >= 0) gemm_tn(go.data(), sx->data(), tp.grad(nw).data(), m, B, n, true);
    });
  }
  return out;
}

// x ⊙ v per row; x: [n] or [B,n], v: [n]
template <typename T>
Tensor<T> rowwise_mul(const Tensor<T>& x, const Tensor<T>& v) {
  auto [B, n] = row_view(x, "rowwise_mul");
  check_shape(v.ndim() == 1 && v.dim(0) == n,
              "rowwise_mul: vector " + shape_str(v.shape()) +
                  " does not match rows of " + shape_str(x.shape()));
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pv = v.data();
  T* po = out.data();
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i) {
      int64_t k = static_cast<int64_t>(b) * n + i;
      po[k] = px[k] * pv[i];
    }
  if (Tape<T>* tape = Tape<T>::joint({&x, &v})) {
    int nx = x.node(), nv = v.node(), no = tape->track(out);
    auto sx = x.storage(), sv = v.storage();
    tape->record("rowwise_mul", {nx, nv}, no, [=, B = B, n = n](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (nx >= 0) {
        auto& gx = tp.grad(nx);
        for (int b = 0; b < B; ++b)
          for (int i = 0; i < n; ++i) {
            size_t k = static_cast<size_t>(b) * n + i;
            gx[k] += go[k] * (*sv)[static_cast<size_t>(i)];
          }
      }
      if (nv >= 0) {
        auto& gv = tp.grad(nv);
        for (int b = 0; b < B; ++b)
          for (int i = 0; i < n; ++i) {
            size_t k = static_cast<size_t>(b) * n + i;
            gv[static_cast<size_t>(i)] += go[k] * (*sx)[k];
          }
      }
    });
  }
  return out;
}

// x + v per row; x: [n] or [B,n], v: [n]
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  auto [B, n] = row_view(x, "add_rowvec");
  check_shape(v.ndim() == 1 && v.dim(0) == n,
              "add_rowvec: vector " + shape_str(v.shape()) +
                  " does not match rows of " + shape_str(x.shape()));
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pv = v.data();
  T* po = out.data();
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i) {
      int64_t k = static_cast<int64_t>(b) * n + i;
      po[k] = px[k] + pv[i];
    }
  if (Tape<T>* tape = Tape<T>::joint({&x, &v})) {
    int nx = x.node(), nv = v.node(), no = tape->track(out);
    tape->record("add_rowvec", {nx, nv}, no, [=, B = B, n = n](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      if (nx >= 0) {
        auto& gx = tp.grad(nx);
        for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (nv >= 0) {
        auto& gv = tp.grad(nv);
        for (int b = 0; b < B; ++b)
          for (int i = 0; i < n; ++i)
            gv[static_cast<size_t>(i)] += go[static_cast<size_t>(b) * n + i];
      }
    });
  }
  return out;
}

// ---- softmax ---------------------------------------------------------------

// Row-wise softmax with max subtraction; x: [K] or [N,K].
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  auto [N, K] = row_view(x, "softmax");
  check_shape(K >= 1, "softmax: empty row");
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int r = 0; r < N; ++r) {
    const T* xr = px + static_cast<int64_t>(r) * K;
    T* yr = po + static_cast<int64_t>(r) * K;
    T m = xr[0];
    for (int i = 1; i < K; ++i) m = std::max(m, xr[i]);
    T sum = T(0);
    for (int i = 0; i < K; ++i) {
      yr[i] = std::exp(xr[i] - m);
      sum += yr[i];
    }
    T inv = T(1) / sum;
    for (int i = 0; i < K; ++i) yr[i] *= inv;
  }
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    auto so = out.storage();
    tape->record("softmax", {nx}, no, [=, N = N, K = K](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (int r = 0; r < N; ++r) {
        size_t base = static_cast<size_t>(r) * K;
        T dot = T(0);
        for (int i = 0; i < K; ++i) dot += go[base + i] * (*so)[base + i];
        for (int i = 0; i < K; ++i)
          gx[base + i] += (*so)[base + i] * (go[base + i] - dot);
      }
    });
  }
  return out;
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  const T* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += px[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("sum", {nx}, no, [=](Tape<T>& tp) {
      T g = tp.grad(no)[0];
      auto& gx = tp.grad(nx);
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  check_shape(x.size() > 0, "mean of empty tensor");
  T inv = T(1) / static_cast<T>(x.size());
  T acc = T(0);
  const T* px = x.data();
  for (int64_t i = 0; i < x.size(); ++i) acc += px[i];
  Tensor<T> out = Tensor<T>::scalar(acc * inv);
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("mean", {nx}, no, [=](Tape<T>& tp) {
      T g = tp.grad(no)[0] * inv;
      auto& gx = tp.grad(nx);
      for (auto& v : gx) v += g;
    });
  }
  return out;
}

// ---- shape plumbing --------------------------------------------------------

// Gradient-aware reshape. Shares storage with the input.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  Tensor<T> out = x.viewed(std::move(shape));
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("reshape", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    });
  }
  return out;
}

// One time step of a [B,T,F] feature sequence -> [B,F].
template <typename T>
Tensor<T> time_slice(const Tensor<T>& x, int t) {
  check_shape(x.ndim() == 3, "time_slice: expected [B,T,F], got " +
                                 shape_str(x.shape()));
  int B = x.dim(0), Tn = x.dim(1), F = x.dim(2);
  check_shape(t >= 0 && t < Tn, "time_slice: t out of range");
  Tensor<T> out(Shape{B, F});
  const T* px = x.data();
  T* po = out.data();
  for (int b = 0; b < B; ++b)
    std::memcpy(po + static_cast<int64_t>(b) * F,
                px + (static_cast<int64_t>(b) * Tn + t) * F,
                sizeof(T) * static_cast<size_t>(F));
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("time_slice", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (int b = 0; b < B; ++b) {
        size_t src = static_cast<size_t>(b) * F;
        size_t dst = (static_cast<size_t>(b) * Tn + t) * F;
        for (int f = 0; f < F; ++f) gx[dst + f] += go[src + f];
      }
    });
  }
  return out;
}

// Stack T step tensors [B,F] into a [B,T,F] sequence.
template <typename T>
Tensor<T> stack_time(const std::vector<Tensor<T>>& steps) {
  check_shape(!steps.empty(), "stack_time: empty sequence");
  int B = steps[0].ndim() == 2 ? steps[0].dim(0) : 1;
  int F = steps[0].ndim() == 2 ? steps[0].dim(1) : steps[0].dim(0);
  int Tn = static_cast<int>(steps.size());
  Tensor<T> out(Shape{B, Tn, F});
  T* po = out.data();
  Tape<T>* tape = nullptr;
  std::vector<int> in_nodes(steps.size(), -1);
  for (int t = 0; t < Tn; ++t) {
    check_shape(steps[static_cast<size_t>(t)].size() == static_cast<int64_t>(B) * F,
                "stack_time: ragged step shapes");
    const T* ps = steps[static_cast<size_t>(t)].data();
    for (int b = 0; b < B; ++b)
      std::memcpy(po + (static_cast<int64_t>(b) * Tn + t) * F,
                  ps + static_cast<int64_t>(b) * F, sizeof(T) * static_cast<size_t>(F));
    if (steps[static_cast<size_t>(t)].tape()) {
      Tape<T>* tp = steps[static_cast<size_t>(t)].tape();
      if (tape && tape != tp)
        throw UsageError("stack_time: steps from different tapes");
      tape = tp;
      in_nodes[static_cast<size_t>(t)] = steps[static_cast<size_t>(t)].node();
    }
  }
  if (tape) {
    int no = tape->track(out);
    tape->record("stack_time", in_nodes, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      for (int t = 0; t < Tn; ++t) {
        int ns = in_nodes[static_cast<size_t>(t)];
        if (ns < 0) continue;
        auto& gs = tp.grad(ns);
        for (int b = 0; b < B; ++b) {
          size_t src = (static_cast<size_t>(b) * Tn + t) * F;
          size_t dst = static_cast<size_t>(b) * F;
          for (int f = 0; f < F; ++f) gs[dst + f] += go[src + f];
        }
      }
    });
  }
  return out;
}

// ---- dropout ---------------------------------------------------------------

// Inverted dropout: units are zeroed with probability p and survivors are
// scaled by 1/(1-p) at training time; inference is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  check_shape(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!training || p == 0.0) return x;
  auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(x.size()));
  T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : *mask) m = rng.uniform() >= p ? keep_scale : T(0);
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (int64_t i = 0; i < x.size(); ++i) po[i] = px[i] * (*mask)[static_cast<size_t>(i)];
  if (Tape<T>* tape = Tape<T>::joint({&x})) {
    int nx = x.node(), no = tape->track(out);
    tape->record("dropout", {nx}, no, [=](Tape<T>& tp) {
      const auto& go = tp.grad(no);
      auto& gx = tp.grad(nx);
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * (*mask)[i];
    });
  }
  return out;
}

// ---- cross-entropy ----------------------------------------------------------

inline constexpr double kLogClamp = 1e-12;

// Mean negative log-likelihood over rows of a probability table.
// probs: [K] or [N,K] rows summing to 1; labels: one class id per row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& probs, const std::vector<int>& labels) {
  auto [N, K] = row_view(probs, "cross_entropy");
  check_shape(static_cast<int>(labels.size()) == N,
              "cross_entropy: " + std::to_string(labels.size()) +
                  " labels for " + std::to_string(N) + " rows");
  for (int r = 0; r < N; ++r)
    if (labels[static_cast<size_t>(r)] < 0 || labels[static_cast<size_t>(r)] >= K)
      throw UsageError("cross_entropy: label " +
                       std::to_string(labels[static_cast<size_t>(r)]) +
                       " out of range [0," + std::to_string(K) + ")");
  const T* pp = probs.data();
  double acc = 0.0;
  for (int r = 0; r < N; ++r) {
    double p = static_cast<double>(pp[static_cast<int64_t>(r) * K + labels[static_cast<size_t>(r)]]);
    acc -= std::log(std::max(p, kLogClamp));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / N));
  if (Tape<T>* tape = Tape<T>::joint({&probs})) {
    int np = probs.node(), no = tape->track(out);
    auto sp = probs.storage();
    auto lab = std::make_shared<std::vector<int>>(labels);
    tape->record("cross_entropy", {np}, no, [=, N = N, K = K](Tape<T>& tp) {
      T g = tp.grad(no)[0];
      auto& gp = tp.grad(np);
      for (int r = 0; r < N; ++r) {
        size_t k = static_cast<size_t>(r) * K + (*lab)[static_cast<size_t>(r)];
        double p = static_cast<double>((*sp)[k]);
        if (p > kLogClamp)
          gp[k] -= g / static_cast<T>(p * N);
        // inside the clamp the loss is locally constant
      }
    });
  }
  return out;
}

}  // namespace fwg::ops
