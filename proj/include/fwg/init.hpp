// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include "fwg/rng.hpp"
#include "fwg/tensor.hpp"

namespace fwg {

// Random orthogonal matrix scaled by gain: rows are orthonormal when m <= n,
// columns when m > n, so every singular value equals gain. Derived from the
// QR decomposition of a seeded Gaussian matrix (sign-fixed on R's diagonal to
// keep the distribution uniform); always computed in double precision.
template <typename T>
Tensor<T> orthogonal_init(int m, int n, double gain, Rng& rng) {
  check_shape(m >= 1 && n >= 1, "orthogonal_init: empty shape");
  const int rows = std::max(m, n);
  const int cols = std::min(m, n);
  Eigen::MatrixXd a(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  const auto& qr_mat = qr.matrixQR();
  for (int j = 0; j < cols; ++j)
    if (qr_mat(j, j) < 0.0) q.col(j) = -q.col(j);

  Tensor<T> out(Shape{m, n});
  if (m <= n) {
    // q is [n, m]; take the transpose for orthonormal rows
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        out(i, j) = static_cast<T>(gain * q(j, i));
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        out(i, j) = static_cast<T>(gain * q(i, j));
  }
  return out;
}

// Orthogonal init for an arbitrary-rank weight: all non-leading axes are
// flattened, so conv kernels [K,C,kh,kw] initialize as a [K, C*kh*kw] matrix.
template <typename T>
Tensor<T> orthogonal_init_shaped(const Shape& shape, double gain, Rng& rng) {
  check_shape(!shape.empty(), "orthogonal_init_shaped: scalar weight");
  const int m = shape[0];
  const int n = static_cast<int>(numel(shape) / shape[0]);
  return orthogonal_init<T>(m, n, gain, rng).viewed(shape);
}

}  // namespace fwg
