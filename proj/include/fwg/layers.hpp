// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Composable network building blocks. A spatial conv layer is a pure linear
// map applied to every frame with shared kernels; the temporal conv layer
// carries the bias and the leaky-ReLU activation; dense layers use inverted
// dropout on their inputs.
#pragma once

#include "fwg/conv.hpp"
#include "fwg/ops.hpp"

namespace fwg {

inline constexpr double kLeakySlope = 0.3;
inline constexpr double kDenseDropout = 0.5;

template <typename T>
struct SpatialConvLayer {
  Tensor<T> kernels;  // [C_out, C_in, 3, 3], no bias

  static SpatialConvLayer make(Tensor<T> kernels) {
    check_shape(kernels.ndim() == 4 && kernels.dim(2) == 3 && kernels.dim(3) == 3,
                "spatial conv kernels must be [C_out,C_in,3,3], got " +
                    shape_str(kernels.shape()));
    return SpatialConvLayer{std::move(kernels)};
  }
  int out_channels() const { return kernels.dim(0); }
  int in_channels() const { return kernels.dim(1); }
};

template <typename T>
struct TemporalConvLayer {
  Tensor<T> kernels;  // [K_out, M, L_t]
  Tensor<T> bias;     // [K_out]

  static TemporalConvLayer make(Tensor<T> kernels, Tensor<T> bias) {
    check_shape(kernels.ndim() == 3, "temporal conv kernels must be [K,M,L], got " +
                                         shape_str(kernels.shape()));
    check_shape(bias.ndim() == 1 && bias.dim(0) == kernels.dim(0),
                "temporal conv bias must have one entry per output map");
    return TemporalConvLayer{std::move(kernels), std::move(bias)};
  }
  int out_channels() const { return kernels.dim(0); }
  int in_channels() const { return kernels.dim(1); }
  int kernel_len() const { return kernels.dim(2); }
};

template <typename T>
struct DenseLayer {
  Tensor<T> weight;  // [m, n]
  Tensor<T> bias;    // [m]
  double dropout_p = kDenseDropout;

  int out_units() const { return weight.dim(0); }
  int in_units() const { return weight.dim(1); }
};

// Same-padded spatial convolution of every frame; parameters shared over
// time, no bias or activation. frames: [T,C,H,W] (or [N,C,H,W]).
template <typename T>
Tensor<T> spatial_block(const Tensor<T>& frames, const SpatialConvLayer<T>& layer) {
  return ops::conv2d(frames, layer.kernels, ops::Pad::same);
}

// Same-padded temporal convolution at every spatial position, then bias and
// leaky ReLU. smaps: [T,M,H,W] or [B,T,M,H,W]; result keeps T.
template <typename T>
Tensor<T> temporal_block(const Tensor<T>& smaps, const TemporalConvLayer<T>& layer) {
  check_shape(smaps.ndim() == 4 || smaps.ndim() == 5,
              "temporal_block: expected [T,M,H,W] or [B,T,M,H,W], got " +
                  shape_str(smaps.shape()));
  const bool batched = smaps.ndim() == 5;
  const int B = batched ? smaps.dim(0) : 1;
  const int Tn = batched ? smaps.dim(1) : smaps.dim(0);
  const int M = batched ? smaps.dim(2) : smaps.dim(1);
  const int H = batched ? smaps.dim(3) : smaps.dim(2);
  const int W = batched ? smaps.dim(4) : smaps.dim(3);
  check_shape(M == layer.in_channels(),
              "temporal_block: " + std::to_string(M) + " input maps vs layer " +
                  std::to_string(layer.in_channels()));
  Tensor<T> flat = ops::reshape(smaps, Shape{B, Tn, M, H * W});
  Tensor<T> conv = ops::conv1d_temporal(flat, layer.kernels, ops::Pad::same);
  Tensor<T> act = ops::leaky_relu(ops::add_channel_bias(conv, layer.bias),
                                  static_cast<T>(kLeakySlope));
  const int K = layer.out_channels();
  return ops::reshape(act, batched ? Shape{B, Tn, K, H, W} : Shape{Tn, K, H, W});
}

// features: [T,F] or [B,T,F] reduced across time.
template <typename T>
Tensor<T> temporal_pool(const Tensor<T>& features, ops::PoolMode mode) {
  return ops::temporal_pool(features, mode);
}

using ops::dropout;

// Fully connected layer: dropout on the input, affine map, leaky ReLU.
template <typename T>
Tensor<T> dense_block(const Tensor<T>& x, const DenseLayer<T>& layer,
                      bool training, Rng& rng) {
  Tensor<T> in = ops::dropout(x, layer.dropout_p, training, rng);
  return ops::leaky_relu(ops::affine(in, layer.weight, layer.bias),
                         static_cast<T>(kLeakySlope));
}

}  // namespace fwg
