// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fwg/layers.hpp"

using namespace fwg;

TEST_CASE("spatial_block: embedded identity kernel, zero kernels, per-frame equality") {
  Rng rng(2);
  // center-1 3x3 kernel acts as the identity on every frame
  auto k = TensorD::full({2, 2, 3, 3}, 0.0);
  k(0, 0, 1, 1) = 1.0;
  k(1, 1, 1, 1) = 1.0;
  auto layer = SpatialConvLayer<double>::make(k);
  auto frames = TensorD::randn({3, 2, 5, 5}, rng);
  auto y = spatial_block(frames, layer);
  for (int64_t i = 0; i < frames.size(); ++i)
    CHECK(y[i] == doctest::Approx(frames[i]));

  auto zero = SpatialConvLayer<double>::make(TensorD::full({2, 2, 3, 3}, 0.0));
  auto yz = spatial_block(frames, zero);
  for (int64_t i = 0; i < yz.size(); ++i) CHECK(yz[i] == 0.0);

  // each output frame equals conv2d of that frame alone
  auto kr = TensorD::randn({4, 2, 3, 3}, rng);
  auto lr = SpatialConvLayer<double>::make(kr);
  auto two = TensorD::randn({2, 2, 6, 6}, rng);
  auto yy = spatial_block(two, lr);
  for (int t = 0; t < 2; ++t) {
    Tensor<double> one({2, 6, 6});
    std::memcpy(one.data(), two.data() + t * one.size(),
                sizeof(double) * static_cast<size_t>(one.size()));
    auto ref = ops::conv2d(one, kr, ops::Pad::same);
    for (int64_t i = 0; i < ref.size(); ++i)
      CHECK(yy[t * ref.size() + i] == doctest::Approx(ref[i]));
  }
}

TEST_CASE("spatial_block output at frame t depends only on input frame t") {
  Rng rng(4);
  auto k = TensorD::randn({3, 2, 3, 3}, rng);
  auto layer = SpatialConvLayer<double>::make(k);
  auto frames = TensorD::randn({4, 2, 5, 5}, rng);
  auto base = spatial_block(frames, layer);
  auto poked = frames.clone();
  poked(2, 1, 2, 3) += 10.0;
  auto out = spatial_block(poked, layer);
  const int64_t per_frame = base.size() / 4;
  for (int t = 0; t < 4; ++t) {
    bool changed = false;
    for (int64_t i = 0; i < per_frame; ++i)
      if (out[t * per_frame + i] != base[t * per_frame + i]) changed = true;
    CHECK(changed == (t == 2));
  }
}

TEST_CASE("temporal_block: identity kernel, bias-only, constant-series closed form") {
  Rng rng(6);
  auto smaps = TensorD::randn({5, 2, 3, 3}, rng);  // [T,M,H,W]

  auto k1 = TensorD::full({2, 2, 1}, 0.0);
  k1(0, 0, 0) = 1.0;
  k1(1, 1, 0) = 1.0;
  auto l1 = TemporalConvLayer<double>::make(k1, TensorD::full({2}, 0.0));
  auto y1 = temporal_block(smaps, l1);
  auto ref = ops::leaky_relu(smaps);
  for (int64_t i = 0; i < ref.size(); ++i)
    CHECK(y1[i] == doctest::Approx(ref[i]));

  // zero kernels and positive bias give the bias everywhere
  auto lb = TemporalConvLayer<double>::make(TensorD::full({3, 2, 3}, 0.0),
                                            TensorD::full({3}, 0.4));
  auto yb = temporal_block(smaps, lb);
  for (int64_t i = 0; i < yb.size(); ++i) CHECK(yb[i] == doctest::Approx(0.4));

  // time-constant input with kernel summing to s: interior frames see
  // leaky_relu(c*s + b)
  const double c = 0.6, b = -0.1;
  Tensor<double> constant({7, 1, 2, 2});
  for (int64_t i = 0; i < constant.size(); ++i) constant[i] = c;
  auto ks = TensorD::from({1, 1, 3}, {0.25, 0.5, -0.05});  // s = 0.7
  auto ls = TemporalConvLayer<double>::make(ks, TensorD::full({1}, b));
  auto ys = temporal_block(constant, ls);
  const double expect = std::max(0.3 * (c * 0.7 + b), c * 0.7 + b);
  for (int t = 1; t < 6; ++t)
    for (int p = 0; p < 4; ++p)
      CHECK(ys[t * 4 + p] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("temporal_block receptive field spans floor(L/2) frames") {
  Rng rng(8);
  auto k = TensorD::randn({2, 2, 3}, rng);
  auto layer = TemporalConvLayer<double>::make(k, TensorD::randn({2}, rng));
  auto smaps = TensorD::randn({8, 2, 2, 2}, rng);
  auto base = temporal_block(smaps, layer);
  auto poked = smaps.clone();
  poked(4, 0, 1, 1) += 5.0;
  auto out = temporal_block(poked, layer);
  const int64_t per_frame = base.size() / 8;
  for (int t = 0; t < 8; ++t) {
    bool changed = false;
    for (int64_t i = 0; i < per_frame; ++i)
      if (out[t * per_frame + i] != base[t * per_frame + i]) changed = true;
    CHECK(changed == (std::abs(t - 4) <= 1));
  }
}

TEST_CASE("dropout: inference identity, p=0 identity, Monte Carlo expectation") {
  Rng rng(10);
  auto x = TensorD::randn({20}, rng);
  auto y_inf = ops::dropout(x, 0.5, /*training=*/false, rng);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y_inf[i] == x[i]);
  auto y_p0 = ops::dropout(x, 0.0, /*training=*/true, rng);
  for (int64_t i = 0; i < x.size(); ++i) CHECK(y_p0[i] == x[i]);

  // inverted scaling keeps the expectation at the input value
  auto unit = TensorD::full({1}, 1.0);
  Rng mc(123);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += ops::dropout(unit, 0.5, true, mc)[0];
  CHECK(std::fabs(sum / n - 1.0) <= 0.02);

  CHECK_THROWS_AS(ops::dropout(x, 1.0, true, rng), ShapeError);
}

TEST_CASE("dropout gradient follows the sampled mask") {
  Rng rng(12);
  auto x = TensorD::from({4}, {1, 2, 3, 4}).set_requires_grad(true);
  Tape<double> tape;
  tape.watch(x);
  Rng drng(99);
  auto y = ops::dropout(static_cast<const TensorD&>(x), 0.5, true, drng);
  tape.backward(ops::sum(y));
  auto g = x.grad();
  for (int64_t i = 0; i < 4; ++i) {
    const bool kept = y[i] != 0.0;
    CHECK(g[i] == (kept ? 2.0 : 0.0));  // survivors scale by 1/(1-p)
  }
}

TEST_CASE("dense_block: inference is leaky(Wx+b) and deterministic") {
  Rng rng(14);
  DenseLayer<double> layer{TensorD::randn({3, 4}, rng), TensorD::randn({3}, rng), 0.5};
  auto x = TensorD::randn({2, 4}, rng);
  Rng unused(0);
  auto a = dense_block(x, layer, /*training=*/false, unused);
  auto b = dense_block(x, layer, /*training=*/false, unused);
  auto ref = ops::leaky_relu(ops::affine(x, layer.weight, layer.bias),
                             kLeakySlope);
  REQUIRE(a.size() == ref.size());
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == ref[i]);
    CHECK(a[i] == b[i]);  // bit-identical inference
  }
}
