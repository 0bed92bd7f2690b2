// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <Eigen/Dense>
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fwg/trainer.hpp"

using namespace fwg;

namespace {

// small separable benchmark: one blob either left or right of center,
// labeled 1/2 per frame; solvable from a single frame
Dataset separable_frames(int n_sequences, int frames, uint64_t seed) {
  Dataset ds;
  ds.n_classes = 2;
  Rng rng(seed);
  for (int s = 0; s < n_sequences; ++s) {
    VideoSequence seq;
    seq.frames = Tensor<float>(Shape{frames, 1, 16, 16});
    seq.labels.resize(static_cast<size_t>(frames));
    int t = 0;
    while (t < frames) {
      const int cls = 1 + static_cast<int>(rng.uniform_int(2));
      const int len = std::min<int>(frames - t, 4 + static_cast<int>(rng.uniform_int(5)));
      for (int i = 0; i < len; ++i, ++t) {
        const double cx = cls == 1 ? 4.0 : 11.0;
        const double cy = 5.0 + rng.uniform(0.0, 6.0);
        float* f = seq.frames.data() + static_cast<int64_t>(t) * 256;
        for (int r = 0; r < 16; ++r)
          for (int c = 0; c < 16; ++c) {
            const double d2 = (c - cx) * (c - cx) + (r - cy) * (r - cy);
            f[r * 16 + c] = static_cast<float>(std::exp(-d2 / 4.0));
          }
        seq.labels[static_cast<size_t>(t)] = static_cast<uint16_t>(cls);
      }
      seq.annotations.push_back(GestureAnnotation{cls, t - len, t - 1});
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace

TEST_CASE("orthogonal_init: orthonormal rows/columns, gain scaling, singular values") {
  Rng rng(1);
  auto w = orthogonal_init<double>(4, 4, 1.0, rng);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double dot = 0;
      for (int k = 0; k < 4; ++k) dot += w(i, k) * w(j, k);
      CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) <= 1e-5);
    }

  auto w2 = orthogonal_init<double>(3, 5, 2.0, rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 5; ++k) dot += w2(i, k) * w2(j, k);
      CHECK(std::fabs(dot - (i == j ? 4.0 : 0.0)) <= 1e-4);
    }

  // decomposition oracle: every singular value equals the gain
  auto w3 = orthogonal_init<double>(6, 4, 1.7, rng);
  Eigen::MatrixXd m(6, 4);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = w3(i, j);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  for (int k = 0; k < 4; ++k)
    CHECK(std::fabs(svd.singularValues()[k] - 1.7) <= 1e-5);

  // conv kernels flatten the non-leading axes
  auto k = orthogonal_init_shaped<double>({4, 2, 3, 3}, 1.0, rng);
  REQUIRE(k.shape() == Shape{4, 2, 3, 3});
  const double* kd = k.data();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      double dot = 0;
      for (int j = 0; j < 18; ++j) dot += kd[a * 18 + j] * kd[b * 18 + j];
      CHECK(std::fabs(dot - (a == b ? 1.0 : 0.0)) <= 1e-5);
    }
}

TEST_CASE("cross_entropy: one-hot, uniform, direct evaluation, label range") {
  auto onehot = TensorF::from({2, 3}, {1, 0, 0, 0, 0, 1});
  CHECK(ops::cross_entropy(onehot, {0, 2})[0] <= 1e-6f);

  auto uniform = TensorF::full({4, 5}, 0.2f);
  CHECK(ops::cross_entropy(uniform, {0, 1, 2, 3})[0] ==
        doctest::Approx(std::log(5.0)).epsilon(1e-6));

  auto p = TensorF::from({2, 2}, {0.7f, 0.3f, 0.2f, 0.8f});
  CHECK(ops::cross_entropy(p, {0, 1})[0] ==
        doctest::Approx(0.28990).epsilon(1e-4));

  CHECK_THROWS_AS(ops::cross_entropy(p, {0, 2}), UsageError);
  CHECK_THROWS_AS(ops::cross_entropy(p, {0}), ShapeError);
}

TEST_CASE("adam_step: zero gradient, first-step value, sign property") {
  ModelParams<double> params;
  params.add("theta", TensorD::from({3}, {0.5, -0.25, 1.0}));
  auto st = OptimizerState<double>::init(params, 1e-3, 1.0);

  // gradient never touched: parameters unchanged
  adam_step(params, st);
  CHECK(params.at(0)[0] == 0.5);
  CHECK(st.t == 1);

  // scalar first step: theta -= lr * 1/(1+eps)
  ModelParams<double> single;
  single.add("theta", TensorD::from({1}, {0.0}));
  auto st1 = OptimizerState<double>::init(single, 1e-3, 1.0);
  single.at(0).grad_vec()[0] = 1.0;
  adam_step(single, st1);
  const double expect = -1e-3 / (1.0 + 1e-8);
  CHECK(single.at(0)[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::fabs(single.at(0)[0] - (-9.99999995e-4)) <= 1e-9);

  // after one step the move opposes the gradient sign
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams<double> p2;
    p2.add("w", TensorD::from({1}, {rng.normal()}));
    auto s2 = OptimizerState<double>::init(p2, 1e-3, 1.0);
    const double g = rng.normal() * 3 + (rng.uniform() < 0.5 ? -1e-3 : 1e-3);
    if (g == 0.0) continue;
    const double before = p2.at(0)[0];
    p2.at(0).grad_vec()[0] = g;
    adam_step(p2, s2);
    const double delta = p2.at(0)[0] - before;
    CHECK(delta * g < 0.0);
  }
}

TEST_CASE("adam_step decreases a random convex quadratic") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 4;
    // PSD matrix A = B Bᵀ + I
    Eigen::MatrixXd b(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(i, j) = rng.normal();
    Eigen::MatrixXd a = b * b.transpose() + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd theta(n);
    for (int i = 0; i < n; ++i) theta[i] = rng.normal();

    auto loss = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(a * x); };
    ModelParams<double> params;
    params.add("theta", TensorD::from({n}, {theta[0], theta[1], theta[2], theta[3]}));
    auto st = OptimizerState<double>::init(params, 1e-2, 1.0);
    st.lr = 1e-2;
    Eigen::VectorXd grad = a * theta;
    for (int i = 0; i < n; ++i) params.at(0).grad_vec()[static_cast<size_t>(i)] = grad[i];
    adam_step(params, st);
    Eigen::VectorXd after(n);
    for (int i = 0; i < n; ++i) after[i] = params.at(0)[i];
    CHECK(loss(after) < loss(theta));
  }
}

TEST_CASE("decay_lr: constant at 1, powers otherwise, monotone") {
  ModelParams<double> params;
  params.add("w", TensorD::from({1}, {0.0}));
  auto st = OptimizerState<double>::init(params, 1e-3, 1.0);
  decay_lr(st, 5);
  CHECK(st.lr == 1e-3);

  st.decay = 0.95;
  decay_lr(st, 2);
  CHECK(st.lr == doctest::Approx(1e-3 * 0.9025).epsilon(1e-12));

  double prev = 1e9;
  for (int e = 0; e < 10; ++e) {
    decay_lr(st, e);
    CHECK(st.lr <= prev);
    prev = st.lr;
  }
  st.decay = 0.0;
  CHECK_THROWS_AS(decay_lr(st, 1), ShapeError);
}

TEST_CASE("EarlyStopper stops after patience exhausted") {
  EarlyStopper st;
  st.patience = 3;
  CHECK(st.observe(1.0, 0));
  // strictly increasing validation loss from epoch 1 on
  for (int e = 1; e <= 3; ++e) {
    CHECK_FALSE(st.observe(1.0 + 0.1 * e, e));
    CHECK_FALSE(st.should_stop());
  }
  CHECK_FALSE(st.observe(1.5, 4));
  CHECK(st.should_stop());  // stops at epoch 4
  CHECK(st.best_epoch == 0);
}

TEST_CASE("train: convergence on a separable two-class frame task") {
  Dataset tr = separable_frames(4, 128, 11);
  Dataset va = separable_frames(2, 64, 12);
  ArchSpec spec = parse_arch("C(4)-C(4)-P-D(16)-S");
  spec.input = InputSignature{1, 1, 16, 16};
  auto model = Model<float>::build(spec, 3, Variant::single, 9);
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.lr = 1e-3;
  cfg.max_epochs = 10;
  cfg.steps_per_epoch = 20;  // 200 optimizer steps
  cfg.patience = 100;
  cfg.seed = 4;
  cfg.augment = false;
  TrainHistory hist = train(model, tr, va, cfg);
  CHECK(hist.final_train_loss < 0.1);
  CHECK(hist.final_train_loss <= hist.initial_train_loss * 0.1);
  CHECK(hist.final_train_loss <= hist.initial_train_loss);  // smoke property
}

TEST_CASE("train: identical seeds give identical histories and parameters") {
  Dataset tr = separable_frames(3, 96, 21);
  Dataset va = separable_frames(2, 64, 22);
  ArchSpec spec = parse_arch("C(4)-P-D(8)-S");
  spec.input = InputSignature{1, 1, 16, 16};
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.max_epochs = 3;
  cfg.steps_per_epoch = 4;
  cfg.seed = 77;
  auto run = [&]() {
    auto model = Model<float>::build(spec, 3, Variant::single, 13);
    TrainHistory h = train(model, tr, va, cfg);
    return std::make_pair(h.to_csv(), model.parameters().snapshot());
  };
  auto [csv1, snap1] = run();
  auto [csv2, snap2] = run();
  CHECK(csv1 == csv2);
  REQUIRE(snap1.size() == snap2.size());
  for (size_t i = 0; i < snap1.size(); ++i)
    CHECK(std::memcmp(snap1[i].data(), snap2[i].data(),
                      snap1[i].size() * sizeof(float)) == 0);
}

TEST_CASE("train: best-validation weights are restored at stop") {
  Dataset tr = separable_frames(3, 96, 31);
  Dataset va = separable_frames(2, 64, 32);
  ArchSpec spec = parse_arch("C(4)-P-D(8)-S");
  spec.input = InputSignature{1, 1, 16, 16};
  auto model = Model<float>::build(spec, 3, Variant::single, 17);
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.max_epochs = 6;
  cfg.steps_per_epoch = 4;
  cfg.seed = 5;
  TrainHistory hist = train(model, tr, va, cfg);
  REQUIRE(hist.best_epoch >= 0);
  double best = 1e30;
  for (const auto& e : hist.epochs) best = std::min(best, e.val_loss);
  CHECK(hist.epochs[static_cast<size_t>(hist.best_epoch)].val_loss == best);

  // restored parameters reproduce the best epoch's validation loss exactly
  BatchSampler<float> val_sampler(va, Variant::single, cfg, 2);
  TrainBatch<float> probe = val_sampler.fixed_sample(cfg.val_samples);
  Tensor<float> probs = model.forward_frames(probe.frames, false, nullptr);
  const double loss = static_cast<double>(ops::cross_entropy(probs, probe.labels)[0]);
  CHECK(loss == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("train: NaN loss aborts with a diagnostic") {
  Dataset tr = separable_frames(2, 64, 41);
  Dataset va = separable_frames(2, 64, 42);
  ArchSpec spec = parse_arch("C(4)-P-D(8)-S");
  spec.input = InputSignature{1, 1, 16, 16};
  auto model = Model<float>::build(spec, 3, Variant::single, 19);
  model.parameters().at(0)[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.max_epochs = 1;
  cfg.steps_per_epoch = 1;
  CHECK_THROWS_AS(train(model, tr, va, cfg), NumericError);
}

TEST_CASE("gradient flow: every parameter receives gradient on every variant") {
  GeneratorConfig gc;
  gc.frames = 80;
  Dataset ds = gen_synthetic(3, 4, gc, 55);
  for (const char* name : {"single_desk", "tpool_mean_desk", "tpool_max_desk",
                           "tconv_desk", "rnn_std_desk", "rnn_lstm_desk",
                           "tconv_lstm_desk"}) {
    const BuiltinSpec* b = find_builtin(name);
    REQUIRE(b != nullptr);
    auto model = Model<float>::build(b->spec, ds.n_classes + 1, b->variant, 23);
    TrainConfig cfg;
    cfg.batch = 2;
    cfg.fragment_len = 16;
    cfg.window = b->variant == Variant::tconv ? 32 : 8;
    cfg.seed = 6;
    cfg.augment = false;
    std::vector<uint8_t> touched(static_cast<size_t>(model.parameters().count()), 0);
    BatchSampler<float> sampler(ds, b->variant, cfg, 1);
    Rng drng(7);
    for (int trial = 0; trial < 5; ++trial) {
      model.parameters().zero_grads();
      Tape<float> tape;
      model.parameters().watch_all(tape);
      TrainBatch<float> batch = sampler.next();
      Tensor<float> probs;
      if (b->variant == Variant::single)
        probs = model.forward_frames(batch.frames, true, &drng);
      else if (model.recurrent()) {
        Tensor<float> seq = model.forward_sequence(batch.frames, true, &drng);
        probs = ops::reshape(seq, Shape{seq.dim(0) * seq.dim(1), seq.dim(2)});
      } else {
        probs = model.forward_window(batch.frames, true, &drng);
      }
      tape.backward(ops::cross_entropy(probs, batch.labels));
      model.parameters().detach_all();
      for (int i = 0; i < model.parameters().count(); ++i) {
        if (!model.parameters().at(i).has_grad()) continue;
        for (float g : model.parameters().at(i).grad_vec())
          if (g != 0.0f) {
            touched[static_cast<size_t>(i)] = 1;
            break;
          }
      }
    }
    for (int i = 0; i < model.parameters().count(); ++i) {
      INFO(name << " parameter " << model.parameters().name(i));
      CHECK(touched[static_cast<size_t>(i)] == 1);
    }
  }
}

TEST_CASE("two-phase pretraining schedule runs and stays deterministic") {
  GeneratorConfig gc;
  gc.frames = 96;
  Dataset tr = gen_synthetic(4, 3, gc, 81);
  Dataset va = gen_synthetic(2, 3, gc, 82);
  const BuiltinSpec* b = find_builtin("tpool_max_desk");
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.max_epochs = 4;
  cfg.steps_per_epoch = 3;
  cfg.window = 16;
  cfg.seed = 9;
  cfg.pretrain_finetune = true;
  cfg.pretrain_epochs = 2;  // frame-by-frame phase, then windowed
  auto run = [&]() {
    auto model = Model<float>::build(b->spec, tr.n_classes + 1, b->variant, 3);
    TrainHistory h = train(model, tr, va, cfg);
    return h.to_csv();
  };
  const std::string a = run();
  CHECK(a == run());
  CHECK(std::count(a.begin(), a.end(), '\n') == 5);  // header + 4 epochs
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  GeneratorConfig gc;
  gc.frames = 80;
  Dataset ds = gen_synthetic(2, 3, gc, 66);
  const BuiltinSpec* b = find_builtin("tpool_max_desk");
  auto model = Model<float>::build(b->spec, ds.n_classes + 1, b->variant, 29);
  auto opt = OptimizerState<float>::init(model.parameters(), 1e-3, 0.97);
  opt.t = 42;
  CheckpointMeta meta;
  meta.window = 16;
  meta.epoch = 7;
  meta.rng_state = 123456789;
  meta.config_echo = "batch=32\nlr=0.001\n";
  save_checkpoint("/tmp/fwg_test_ckpt.fwgc", model, &opt, meta);
  LoadedCheckpoint lc = load_checkpoint("/tmp/fwg_test_ckpt.fwgc");
  CHECK(lc.meta.arch == render_arch(model.spec()));
  CHECK(lc.meta.window == 16);
  CHECK(lc.meta.epoch == 7);
  CHECK(lc.meta.rng_state == 123456789);
  CHECK(lc.meta.config_echo == meta.config_echo);
  CHECK(lc.has_opt);
  CHECK(lc.opt.t == 42);
  REQUIRE(lc.model.parameters().count() == model.parameters().count());
  for (int i = 0; i < model.parameters().count(); ++i) {
    const auto& a = model.parameters().at(i).vec();
    const auto& c = lc.model.parameters().at(i).vec();
    CHECK(std::memcmp(a.data(), c.data(), a.size() * sizeof(float)) == 0);
  }
  // same state saved twice gives identical bytes
  save_checkpoint("/tmp/fwg_test_ckpt2.fwgc", model, &opt, meta);
  std::ifstream f1("/tmp/fwg_test_ckpt.fwgc", std::ios::binary);
  std::ifstream f2("/tmp/fwg_test_ckpt2.fwgc", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
}
