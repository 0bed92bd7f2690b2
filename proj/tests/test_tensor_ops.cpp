// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fwg/conv.hpp"
#include "fwg/ops.hpp"

using namespace fwg;

namespace {

// brute-force pooling oracle: max over each disjoint block
template <typename T>
T block_max(const Tensor<T>& x, int t0, int c, int i0, int j0, int Tn, int H, int W) {
  T best = -1e30;
  for (int dt = 0; dt < 2; ++dt)
    for (int di = 0; di < 2; ++di)
      for (int dj = 0; dj < 2; ++dj) {
        int t = std::min(t0 + dt, Tn - 1), i = std::min(i0 + di, H - 1),
            j = std::min(j0 + dj, W - 1);
        best = std::max(best, x(t, c, i, j));
      }
  return best;
}

}  // namespace

TEST_CASE("conv2d: constant field, identity kernel, windowed sum") {
  // all-ones 3x3 input, all-ones 2x2 kernel, valid -> 2x2 of 4
  auto x = TensorD::full({1, 3, 3}, 1.0);
  auto k = TensorD::full({1, 1, 2, 2}, 1.0);
  auto y = ops::conv2d(x, k, ops::Pad::valid);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  for (int i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(4.0));

  // 1x1 kernel of value 1, same -> identity
  Rng rng(11);
  auto xr = TensorD::randn({2, 5, 4}, rng);
  auto k1 = TensorD::full({2, 2, 1, 1}, 0.0);
  k1(0, 0, 0, 0) = 1.0;
  k1(1, 1, 0, 0) = 1.0;
  auto yr = ops::conv2d(xr, k1, ops::Pad::same);
  for (int64_t i = 0; i < xr.size(); ++i) CHECK(yr[i] == doctest::Approx(xr[i]));

  // [[1,2],[3,4]] with kernel [[1,0],[0,1]] valid -> [[5]]
  auto x2 = TensorD::from({1, 2, 2}, {1, 2, 3, 4});
  auto k2 = TensorD::from({1, 1, 2, 2}, {1, 0, 0, 1});
  auto y2 = ops::conv2d(x2, k2, ops::Pad::valid);
  REQUIRE(y2.shape() == Shape{1, 1, 1});
  CHECK(y2[0] == doctest::Approx(5.0));
}

TEST_CASE("conv2d: same padding pads by (k-1)/2 with zeros") {
  auto x = TensorD::full({1, 3, 3}, 1.0);
  auto k = TensorD::full({1, 1, 3, 3}, 1.0);
  auto y = ops::conv2d(x, k, ops::Pad::same);
  REQUIRE(y.shape() == Shape{1, 3, 3});
  CHECK(y(0, 1, 1) == doctest::Approx(9.0));  // interior
  CHECK(y(0, 0, 0) == doctest::Approx(4.0));  // corner
  CHECK(y(0, 0, 1) == doctest::Approx(6.0));  // edge
}

TEST_CASE("conv2d: shape errors report both shapes") {
  auto x = TensorD::full({2, 4, 4}, 1.0);
  auto k = TensorD::full({1, 3, 3, 3}, 1.0);  // channel mismatch
  CHECK_THROWS_AS(ops::conv2d(x, k, ops::Pad::same), ShapeError);
  auto kbig = TensorD::full({1, 2, 5, 5}, 1.0);  // larger than input
  CHECK_THROWS_AS(ops::conv2d(x, kbig, ops::Pad::valid), ShapeError);
  auto keven = TensorD::full({1, 2, 2, 2}, 1.0);  // even kernel in same mode
  CHECK_THROWS_AS(ops::conv2d(x, keven, ops::Pad::same), ShapeError);
}

TEST_CASE("conv2d and conv1d_temporal are linear maps") {
  Rng rng(3);
  auto x = TensorD::randn({2, 6, 6}, rng);
  auto y = TensorD::randn({2, 6, 6}, rng);
  auto k = TensorD::randn({3, 2, 3, 3}, rng);
  double a = 0.7, b = -1.3;
  auto ax_by = ops::add(ops::scale(x, a), ops::scale(y, b));
  auto lhs = ops::conv2d(ax_by, k, ops::Pad::same);
  auto rhs = ops::add(ops::scale(ops::conv2d(x, k, ops::Pad::same), a),
                      ops::scale(ops::conv2d(y, k, ops::Pad::same), b));
  for (int64_t i = 0; i < lhs.size(); ++i)
    CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-6));

  auto xt = TensorD::randn({7, 3}, rng);
  auto yt = TensorD::randn({7, 3}, rng);
  auto kt = TensorD::randn({2, 3, 3}, rng);
  auto lhs_t = ops::conv1d_temporal(
      ops::add(ops::scale(xt, a), ops::scale(yt, b)), kt, ops::Pad::valid);
  auto rhs_t = ops::add(ops::scale(ops::conv1d_temporal(xt, kt, ops::Pad::valid), a),
                        ops::scale(ops::conv1d_temporal(yt, kt, ops::Pad::valid), b));
  for (int64_t i = 0; i < lhs_t.size(); ++i)
    CHECK(lhs_t[i] == doctest::Approx(rhs_t[i]).epsilon(1e-6));
}

TEST_CASE("conv1d_temporal: identity kernel, zero-padded sums, constant series") {
  auto x = TensorD::from({3, 1}, {1, 2, 3});
  auto k1 = TensorD::from({1, 1, 1}, {1});
  auto y1 = ops::conv1d_temporal(x, k1, ops::Pad::same);
  REQUIRE(y1.shape() == Shape{3, 1});
  CHECK(y1[0] == 1.0);
  CHECK(y1[1] == 2.0);
  CHECK(y1[2] == 3.0);

  auto k3 = TensorD::from({1, 1, 3}, {1, 1, 1});
  auto y3 = ops::conv1d_temporal(x, k3, ops::Pad::same);
  CHECK(y3[0] == doctest::Approx(3.0));
  CHECK(y3[1] == doctest::Approx(6.0));
  CHECK(y3[2] == doctest::Approx(5.0));

  // constant series c with kernel summing to s -> c*s in the valid region
  const double c = 2.5;
  auto xc = TensorD::full({9, 1}, c);
  auto ks = TensorD::from({1, 1, 3}, {0.5, 1.0, -0.25});
  auto yv = ops::conv1d_temporal(xc, ks, ops::Pad::valid);
  REQUIRE(yv.shape() == Shape{7, 1});
  for (int64_t i = 0; i < yv.size(); ++i)
    CHECK(yv[i] == doctest::Approx(c * 1.25));

  // kernel longer than the series in valid mode
  auto klong = TensorD::full({1, 1, 5}, 1.0);
  CHECK_THROWS_AS(ops::conv1d_temporal(x, klong, ops::Pad::valid), ShapeError);
}

TEST_CASE("max_pool2d: block max and argmax routing") {
  auto x = TensorD::from({1, 2, 2}, {1, 2, 3, 4});
  auto y = ops::max_pool2d(x);
  REQUIRE(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 4.0);

  auto xc = TensorD::full({3, 4, 4}, 0.25);
  auto yc = ops::max_pool2d(xc);
  for (int64_t i = 0; i < yc.size(); ++i) CHECK(yc[i] == 0.25);

  // tie breaks to the first index in row-major order
  auto xt = TensorD::from({1, 2, 2}, {5, 5, 1, 0});
  xt.set_requires_grad(true);
  Tape<double> tape;
  tape.watch(xt);
  auto yt = ops::max_pool2d(xt);
  auto loss = ops::sum(yt);
  tape.backward(loss);
  auto g = xt.grad();
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("max_pool2d backward deposits on exactly one position per block") {
  Rng rng(5);
  auto x = TensorD::randn({2, 6, 8}, rng);
  x.set_requires_grad(true);
  Tape<double> tape;
  tape.watch(x);
  auto y = ops::max_pool2d(x);
  tape.backward(ops::sum(y));
  auto g = x.grad();
  int nonzero = 0;
  for (int64_t i = 0; i < g.size(); ++i)
    if (g[i] != 0.0) ++nonzero;
  CHECK(nonzero == y.size());  // one deposit per block, upstream grad is 1
}

TEST_CASE("max_pool3d: cube max, time-constant reduction, brute-force oracle") {
  std::vector<double> cube(2 * 1 * 2 * 2);
  for (size_t i = 0; i < cube.size(); ++i) cube[i] = static_cast<double>(i + 1);
  auto x = TensorD::from({2, 1, 2, 2}, cube);
  auto y = ops::max_pool3d(x);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 8.0);

  // input constant in time equals max_pool2d of one frame
  Rng rng(9);
  auto frame = TensorD::randn({3, 4, 4}, rng);
  Tensor<double> vid({2, 3, 4, 4});
  for (int t = 0; t < 2; ++t)
    for (int64_t i = 0; i < frame.size(); ++i)
      vid[t * frame.size() + i] = frame[i];
  auto y3 = ops::max_pool3d(vid);
  auto y2 = ops::max_pool2d(frame);
  REQUIRE(y3.size() == y2.size());
  for (int64_t i = 0; i < y2.size(); ++i) CHECK(y3[i] == y2[i]);

  // random 4x4x4 single-channel input vs exhaustive block scan
  auto xr = TensorD::randn({4, 1, 4, 4}, rng);
  auto yr = ops::max_pool3d(xr);
  for (int ot = 0; ot < 2; ++ot)
    for (int oi = 0; oi < 2; ++oi)
      for (int oj = 0; oj < 2; ++oj)
        CHECK(yr(ot, 0, oi, oj) ==
              block_max(xr, 2 * ot, 0, 2 * oi, 2 * oj, 4, 4, 4));
}

TEST_CASE("affine: identity, zero weight, matrix-vector example") {
  auto x = TensorD::from({2}, {3, -4});
  auto id = TensorD::from({2, 2}, {1, 0, 0, 1});
  auto zb = TensorD::full({2}, 0.0);
  auto y = ops::affine(x, id, zb);
  CHECK(y[0] == 3.0);
  CHECK(y[1] == -4.0);

  auto zw = TensorD::full({2, 2}, 0.0);
  auto b = TensorD::from({2}, {0.5, -1.5});
  auto yb = ops::affine(x, zw, b);
  CHECK(yb[0] == 0.5);
  CHECK(yb[1] == -1.5);

  auto w = TensorD::from({2, 2}, {1, 2, 3, 4});
  auto ones = TensorD::from({2}, {1, 1});
  auto b2 = TensorD::from({2}, {0, 1});
  auto y2 = ops::affine(ones, w, b2);
  CHECK(y2[0] == doctest::Approx(3.0));
  CHECK(y2[1] == doctest::Approx(8.0));

  CHECK_THROWS_AS(ops::affine(TensorD::full({3}, 1.0), w, b2), ShapeError);
}

TEST_CASE("leaky_relu: slope 0.3 below zero") {
  auto x = TensorD::from({3}, {2.0, 0.0, -1.0});
  auto y = ops::leaky_relu(x);
  CHECK(y[0] == 2.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(-0.3));
}

TEST_CASE("softmax: symmetry, shift invariance, closed-form ratios") {
  auto y0 = ops::softmax(TensorD::from({2}, {0, 0}));
  CHECK(y0[0] == doctest::Approx(0.5));
  CHECK(y0[1] == doctest::Approx(0.5));

  Rng rng(17);
  auto x = TensorD::randn({6}, rng);
  auto xs = x.clone();
  for (int64_t i = 0; i < xs.size(); ++i) xs[i] += 42.0;
  auto ya = ops::softmax(x);
  auto yb = ops::softmax(xs);
  double sum = 0;
  for (int64_t i = 0; i < ya.size(); ++i) {
    CHECK(std::fabs(ya[i] - yb[i]) <= 1e-6);
    CHECK(ya[i] > 0.0);
    sum += ya[i];
  }
  CHECK(std::fabs(sum - 1.0) <= 1e-6);

  auto yl = ops::softmax(TensorD::from(
      {3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(yl[0] == doctest::Approx(1.0 / 6));
  CHECK(yl[1] == doctest::Approx(2.0 / 6));
  CHECK(yl[2] == doctest::Approx(3.0 / 6));
}

TEST_CASE("temporal_pool: identity at T=1, mean, permutation invariance") {
  auto one = TensorD::from({1, 3}, {1, 2, 3});
  for (auto mode : {ops::PoolMode::mean, ops::PoolMode::max}) {
    auto y = ops::temporal_pool(one, mode);
    REQUIRE(y.shape() == Shape{3});
    CHECK(y[0] == 1.0);
    CHECK(y[2] == 3.0);
  }
  auto x = TensorD::from({2, 1}, {1, 3});
  CHECK(ops::temporal_pool(x, ops::PoolMode::mean)[0] == doctest::Approx(2.0));

  // permuting frames leaves both modes unchanged
  Rng rng(23);
  auto xr = TensorD::randn({5, 4}, rng);
  Tensor<double> xp({5, 4});
  int perm[5] = {3, 0, 4, 2, 1};
  for (int t = 0; t < 5; ++t)
    for (int f = 0; f < 4; ++f) xp(t, f) = xr(perm[t], f);
  for (auto mode : {ops::PoolMode::mean, ops::PoolMode::max}) {
    auto ya = ops::temporal_pool(xr, mode);
    auto yb = ops::temporal_pool(xp, mode);
    for (int64_t i = 0; i < ya.size(); ++i)
      CHECK(ya[i] == doctest::Approx(yb[i]).epsilon(1e-12));
  }

  Tensor<double> empty({0, 4});
  CHECK_THROWS_AS(ops::temporal_pool(empty, ops::PoolMode::mean), UsageError);
}
