// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Each numbered criterion prints one PASS/FAIL line; the
// binary exits nonzero if any criterion fails.
//
//   1. gradient suite (CLI gradcheck) within tolerance and time budget
//   2. scoring metrics match independent set-based oracles exactly
//   3. architecture ordering on the synthetic motion benchmark
//   4. optimizer convergence on a separable frame task
//   5. bit-identical artifacts for identical seeds
//   6. pinned contract constants
//   7. orthogonal initialization property
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "fwg/evalmetrics.hpp"
#include "fwg/gradcheck.hpp"
#include "fwg/infer.hpp"
#include "fwg/trainer.hpp"

namespace fs = std::filesystem;
using namespace fwg;

namespace {

double now_s() {
  timespec ts;
  clock_gettime(CLOCK_MONOTONIC, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

int g_failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail) {
  std::printf("[%d/7] %-28s %s  %s\n", index, name, pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() /
                 ("fwg_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
  const fs::path out = work_dir() / "cli_output.txt";
  const std::string cmd = std::string(FWG_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream is(out);
    std::stringstream ss;
    ss << is.rdbuf();
    *output = ss.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---- 1: gradient suite ------------------------------------------------------

void criterion_gradients() {
  const double t0 = now_s();
  std::string out;
  const int code = run_cli("gradcheck --step 1e-5 --tolerance 1e-4", &out);
  const double elapsed = now_s() - t0;
  const bool has_rows = out.find("lstm_bptt_8") != std::string::npos &&
                        out.find("rnn_std_bptt_8") != std::string::npos &&
                        out.find("tconv_lstm_graph") != std::string::npos &&
                        out.find("conv2d") != std::string::npos &&
                        out.find("softmax_xent") != std::string::npos;
  report(1, "gradient-suite", code == 0 && has_rows && elapsed <= 300.0,
         strfmt("exit=%d rows=%s %.1fs (budget 300s)", code,
                has_rows ? "complete" : "missing", elapsed));
}

// ---- 2: metric oracle ---------------------------------------------------------

// fully independent set-based implementations
namespace oracle {

double jaccard(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  std::set<size_t> sa, sb, inter, uni;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i]) sa.insert(i);
    if (b[i]) sb.insert(i);
  }
  for (size_t i : sa)
    if (sb.count(i)) inter.insert(i);
  uni = sa;
  uni.insert(sb.begin(), sb.end());
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

struct PrCounts {
  std::map<int, int64_t> tp, fp, fn;
};

void count_pr(const std::vector<int>& pred, const std::vector<uint16_t>& truth,
              PrCounts& c) {
  for (size_t t = 0; t < pred.size(); ++t) {
    if (pred[t] == truth[t]) {
      ++c.tp[pred[t]];
    } else {
      ++c.fp[pred[t]];
      ++c.fn[truth[t]];
    }
  }
}

int majority(const std::vector<int>& slice) {
  std::map<int, int64_t> votes;
  for (int v : slice) ++votes[v];
  int best = -1;
  int64_t best_n = -1;
  for (const auto& [cls, n] : votes)
    if (n > best_n) {  // std::map iterates ascending: lowest id wins ties
      best_n = n;
      best = cls;
    }
  return best;
}

}  // namespace oracle

void criterion_metric_oracle() {
  Rng rng(4242);
  double max_diff = 0.0;
  int64_t trials = 0;

  // jaccard + mean over 1000 random track sets
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = 8 + static_cast<int>(rng.uniform_int(96));
    const int S = 1 + static_cast<int>(rng.uniform_int(4));
    const int N = 1 + static_cast<int>(rng.uniform_int(5));
    std::vector<std::vector<BinaryTrack>> truth(static_cast<size_t>(S)),
        pred(static_cast<size_t>(S));
    double oracle_sum = 0.0;
    int64_t oracle_n = 0;
    for (int s = 0; s < S; ++s) {
      truth[static_cast<size_t>(s)].resize(static_cast<size_t>(N) + 1);
      pred[static_cast<size_t>(s)].resize(static_cast<size_t>(N) + 1);
      for (int n = 0; n <= N; ++n) {
        auto& a = truth[static_cast<size_t>(s)][static_cast<size_t>(n)].bits;
        auto& b = pred[static_cast<size_t>(s)][static_cast<size_t>(n)].bits;
        a.resize(static_cast<size_t>(T));
        b.resize(static_cast<size_t>(T));
        const double pa = rng.uniform(0.0, 0.6), pb = rng.uniform(0.0, 0.6);
        for (int t = 0; t < T; ++t) {
          a[static_cast<size_t>(t)] = rng.uniform() < pa ? 1 : 0;
          b[static_cast<size_t>(t)] = rng.uniform() < pb ? 1 : 0;
        }
      }
      for (int n = 1; n <= N; ++n) {
        const auto& a = truth[static_cast<size_t>(s)][static_cast<size_t>(n)].bits;
        const auto& b = pred[static_cast<size_t>(s)][static_cast<size_t>(n)].bits;
        const double j = oracle::jaccard(a, b);
        max_diff = std::max(
            max_diff,
            std::fabs(j - jaccard(truth[static_cast<size_t>(s)][static_cast<size_t>(n)],
                                  pred[static_cast<size_t>(s)][static_cast<size_t>(n)])));
        ++trials;
        const bool absent = std::count(a.begin(), a.end(), 1) == 0 &&
                            std::count(b.begin(), b.end(), 1) == 0;
        if (!absent) {
          oracle_sum += j;
          ++oracle_n;
        }
      }
    }
    const double mine = mean_jaccard(truth, pred, false);
    const double ref = oracle_n ? oracle_sum / static_cast<double>(oracle_n) : 0.0;
    max_diff = std::max(max_diff, std::fabs(mine - ref));
  }

  // precision/recall and the isolated error rate on random label tracks
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = 30 + static_cast<int>(rng.uniform_int(80));
    const int K = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<int> pred(static_cast<size_t>(T));
    std::vector<uint16_t> truth(static_cast<size_t>(T), 0);
    std::vector<GestureAnnotation> ann;
    for (auto& p : pred) p = static_cast<int>(rng.uniform_int(K + 1));
    int t = 0;
    while (t + 6 < T) {
      const int len = 3 + static_cast<int>(rng.uniform_int(6));
      const int cls = 1 + static_cast<int>(rng.uniform_int(K));
      if (t + len >= T) break;
      for (int i = 0; i < len; ++i)
        truth[static_cast<size_t>(t + i)] = static_cast<uint16_t>(cls);
      ann.push_back(GestureAnnotation{cls, t, t + len - 1});
      t += len + 2 + static_cast<int>(rng.uniform_int(5));
    }
    if (ann.empty()) continue;

    PerClassPR mine = precision_recall({pred}, {truth}, K);
    oracle::PrCounts c;
    oracle::count_pr(pred, truth, c);
    double psum = 0, rsum = 0;
    int pn = 0, rn = 0;
    for (int cls = 1; cls <= K; ++cls) {
      const int64_t tp = c.tp.count(cls) ? c.tp[cls] : 0;
      const int64_t fp = c.fp.count(cls) ? c.fp[cls] : 0;
      const int64_t fn = c.fn.count(cls) ? c.fn[cls] : 0;
      if (tp + fp > 0) {
        const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
        max_diff = std::max(max_diff, std::fabs(p - mine.precision[static_cast<size_t>(cls)]));
        psum += p;
        ++pn;
      }
      if (tp + fn > 0) {
        const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
        max_diff = std::max(max_diff, std::fabs(r - mine.recall[static_cast<size_t>(cls)]));
        rsum += r;
        ++rn;
      }
    }
    if (pn) max_diff = std::max(max_diff, std::fabs(psum / pn - mine.macro_precision));
    if (rn) max_diff = std::max(max_diff, std::fabs(rsum / rn - mine.macro_recall));

    int64_t wrong = 0;
    for (const auto& a : ann) {
      std::vector<int> slice(pred.begin() + a.start, pred.begin() + a.end + 1);
      if (oracle::majority(slice) != a.cls) ++wrong;
    }
    const double ref_err = static_cast<double>(wrong) / static_cast<double>(ann.size());
    max_diff = std::max(max_diff,
                        std::fabs(ref_err - isolated_error_rate({pred}, {ann})));
    ++trials;
  }
  report(2, "metric-oracle", max_diff <= 1e-12,
         strfmt("max |difference| = %.3g over %lld comparisons", max_diff,
                static_cast<long long>(trials)));
}

// ---- 3: synthetic ordering experiment ------------------------------------------

struct OrderingBudget {
  const char* builtin;
  int epochs;
  int steps;
};

// per-model training budgets (each far below the 30-minute ceiling)
constexpr OrderingBudget kBudgets[] = {
    {"single_desk", 8, 60},
    {"tpool_mean_desk", 10, 40},
    {"rnn_lstm_desk", 24, 30},
    {"tconv_lstm_desk", 24, 30},
};

struct OrderingResult {
  double jaccard = -1.0;
  double train_seconds = 0.0;
};

OrderingResult ordering_job(uint64_t seed, const OrderingBudget& budget,
                            const Dataset& tr, const Dataset& va, const Dataset& te) {
  const BuiltinSpec* b = find_builtin(budget.builtin);
  Model<float> model =
      Model<float>::build(b->spec, tr.n_classes + 1, b->variant, seed * 31 + 7);
  TrainConfig cfg;
  cfg.batch = 32;
  cfg.lr = 1e-3;
  cfg.max_epochs = budget.epochs;
  cfg.steps_per_epoch = budget.steps;
  cfg.seed = seed;
  cfg.patience = 8;
  if (b->variant == Variant::tpool || b->variant == Variant::tconv)
    cfg.window = b->eval_window;
  OrderingResult r;
  const double t0 = now_s();
  train(model, tr, va, cfg);
  r.train_seconds = now_s() - t0;
  std::vector<Tensor<float>> tracks = predict_dataset(model, te, b->eval_window, 1);
  r.jaccard = evaluate_predictions(te, tracks).jaccard_avg;
  return r;
}

void criterion_ordering() {
  constexpr int kModels = 4;
  const uint64_t seeds[3] = {1, 2, 3};
  OrderingResult results[3][kModels];

  struct Job {
    int seed_idx;
    int model_idx;
  };
  std::vector<Job> jobs;
  for (int s = 0; s < 3; ++s)
    for (int m = kModels - 1; m >= 0; --m) jobs.push_back(Job{s, m});  // heavy first

  // datasets per seed, generated once
  Dataset tr[3], va[3], te[3];
  GeneratorConfig gc;
  gc.frames = 256;
  gc.height = 16;
  gc.width = 16;
  for (int s = 0; s < 3; ++s) {
    tr[s] = gen_synthetic(60, 5, gc, 1000 + seeds[s]);
    va[s] = gen_synthetic(20, 5, gc, 2000 + seeds[s]);
    te[s] = gen_synthetic(20, 5, gc, 3000 + seeds[s]);
  }

  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job job = jobs[j];
      results[job.seed_idx][job.model_idx] =
          ordering_job(seeds[job.seed_idx], kBudgets[job.model_idx],
                       tr[job.seed_idx], va[job.seed_idx], te[job.seed_idx]);
    }
  };
  const unsigned hw = std::max(2u, std::thread::hardware_concurrency());
  const int n_workers = static_cast<int>(std::min(hw, 4u));
  std::vector<std::thread> pool;
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  int seeds_ok = 0;
  std::string detail;
  bool budget_ok = true;
  for (int s = 0; s < 3; ++s) {
    const double j_single = results[s][0].jaccard;
    const double j_tpool = results[s][1].jaccard;
    const double j_lstm = results[s][2].jaccard;
    const double j_tclstm = results[s][3].jaccard;
    for (int m = 0; m < kModels; ++m)
      budget_ok = budget_ok && results[s][m].train_seconds <= 1800.0;
    const bool a = j_single <= 0.25;
    const bool b = j_tpool >= j_single + 0.15;
    const bool c = j_tclstm >= 0.60 && j_lstm >= 0.60 && j_tclstm >= j_tpool &&
                   j_lstm >= j_tpool;
    const double best_other = std::max({j_single, j_tpool, j_lstm});
    const bool d = j_tclstm >= best_other - 0.02;
    if (a && b && c && d) ++seeds_ok;
    detail += strfmt("\n      seed %llu: single=%.3f tpool=%.3f lstm=%.3f "
                     "tconv_lstm=%.3f  [%c%c%c%c] (train %.0f/%.0f/%.0f/%.0fs)",
                     static_cast<unsigned long long>(seeds[s]), j_single, j_tpool,
                     j_lstm, j_tclstm, a ? 'a' : '-', b ? 'b' : '-',
                     c ? 'c' : '-', d ? 'd' : '-', results[s][0].train_seconds,
                     results[s][1].train_seconds, results[s][2].train_seconds,
                     results[s][3].train_seconds);
  }
  report(3, "ordering-experiment", seeds_ok >= 2 && budget_ok,
         strfmt("%d/3 seeds satisfied, budgets %s%s", seeds_ok,
                budget_ok ? "ok" : "exceeded", detail.c_str()));
}

// ---- 4: convergence smoke -------------------------------------------------------

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

void criterion_convergence() {
  Dataset tr = separable_frames(4, 128, 911);
  Dataset va = separable_frames(2, 64, 912);
  ArchSpec spec = parse_arch("C(4)-C(4)-P-D(16)-S");
  spec.input = InputSignature{1, 1, 16, 16};
  Model<float> model = Model<float>::build(spec, 3, Variant::single, 909);
  TrainConfig cfg;
  cfg.batch = 32;   // optimizer defaults under test
  cfg.lr = 1e-3;
  cfg.max_epochs = 10;
  cfg.steps_per_epoch = 20;  // 200 optimizer steps
  cfg.patience = 1000;
  cfg.seed = 14;
  cfg.augment = false;
  TrainHistory hist = train(model, tr, va, cfg);
  const bool pass = hist.final_train_loss <= 0.1 * hist.initial_train_loss;
  report(4, "convergence-smoke", pass,
         strfmt("train loss %.4f -> %.4f (need >= 90%% reduction in 200 steps)",
                hist.initial_train_loss, hist.final_train_loss));
}

// ---- 5: determinism ---------------------------------------------------------------

void criterion_determinism() {
  const fs::path dir = work_dir();
  const std::string gen = "gendata --classes 4 --sequences 8 --frames 128 "
                          "--size 16 --seed 21 --out ";
  bool ok = run_cli(gen + (dir / "det_train.fwgd").string()) == 0;
  ok = ok && run_cli(gen + (dir / "det_train2.fwgd").string()) == 0;
  ok = ok && run_cli("gendata --classes 4 --sequences 3 --frames 128 --size 16 "
                     "--seed 22 --out " + (dir / "det_val.fwgd").string()) == 0;
  ok = ok && slurp(dir / "det_train.fwgd") == slurp(dir / "det_train2.fwgd");

  const std::string train_cmd =
      "train --arch tconv_lstm_desk --data " + (dir / "det_train.fwgd").string() +
      " --val " + (dir / "det_val.fwgd").string() +
      " --seed 5 --epochs 2 --steps 3 --batch 8 --out ";
  ok = ok && run_cli(train_cmd + (dir / "det_run1").string()) == 0;
  ok = ok && run_cli(train_cmd + (dir / "det_run2").string()) == 0;
  const bool ckpt_same = slurp(dir / "det_run1" / "checkpoint.fwgc") ==
                         slurp(dir / "det_run2" / "checkpoint.fwgc");
  const bool hist_same = slurp(dir / "det_run1" / "history.csv") ==
                         slurp(dir / "det_run2" / "history.csv");

  const std::string eval_cmd =
      "eval --checkpoint " + (dir / "det_run1" / "checkpoint.fwgc").string() +
      " --data " + (dir / "det_val.fwgd").string() + " --threads 2 --out ";
  ok = ok && run_cli(eval_cmd + (dir / "det_eval1").string()) == 0;
  ok = ok && run_cli(eval_cmd + (dir / "det_eval2").string()) == 0;
  const bool report_same = slurp(dir / "det_eval1" / "report.txt") ==
                           slurp(dir / "det_eval2" / "report.txt") &&
                           slurp(dir / "det_eval1" / "probs_seq002.csv") ==
                           slurp(dir / "det_eval2" / "probs_seq002.csv");
  report(5, "determinism", ok && ckpt_same && hist_same && report_same,
         strfmt("dataset=%s checkpoint=%s history=%s report=%s",
                ok ? "identical" : "differs", ckpt_same ? "identical" : "differs",
                hist_same ? "identical" : "differs",
                report_same ? "identical" : "differs"));
}

// ---- 6: contract constants ----------------------------------------------------------

void criterion_constants() {
  std::string bad;

  // leaky ReLU slope
  auto x = TensorD::from({1}, {-1.0});
  if (std::fabs(ops::leaky_relu(x)[0] - (-0.3)) > 1e-12) bad += " leaky-slope";

  // dense dropout probability
  if (kDenseDropout != 0.5) bad += " dropout-p";
  DenseLayer<float> d{TensorF::full({2, 2}, 0.0f), TensorF::full({2}, 0.0f)};
  if (d.dropout_p != 0.5) bad += " dense-default";

  // fragment length and evaluation mask
  if (kFragmentLen != 64) bad += " fragment-len";
  Fragment f;
  if (f.mask_begin != 16 || f.mask_end != 48) bad += " eval-mask";
  {
    GeneratorConfig gc;
    gc.frames = 64;
    Dataset one = gen_synthetic(1, 2, gc, 5);
    Rng rng(1);
    Fragment ff = sample_fragment(one.sequences[0], rng);
    if (ff.mask_begin != 16 || ff.mask_end != 48) bad += " sampled-mask";
  }

  // sliding windows per variant
  if (find_builtin("tpool_max_paper")->eval_window != 16) bad += " window-max";
  if (find_builtin("tpool_mean_paper")->eval_window != 32) bad += " window-mean";
  if (find_builtin("tconv_paper")->eval_window != 32) bad += " window-tconv";

  // full-scale hidden unit counts
  if (find_builtin("rnn_lstm_paper")->spec.find(ArchTag::L)->args[0] != 512)
    bad += " lstm-units";
  if (find_builtin("rnn_std_paper")->spec.find(ArchTag::R)->args[0] != 2048)
    bad += " std-units";

  // augmentation sampler stays inside the published intervals
  Rng rng(606);
  bool in_range = true;
  for (int i = 0; i < 1000000 && in_range; ++i) {
    AugmentParams p = sample_augment_params(rng);
    in_range = p.dy >= -5 && p.dy <= 5 && p.dx >= -10 && p.dx <= 10 &&
               p.rot_deg >= -2 && p.rot_deg <= 2 && p.shear_deg >= -2 &&
               p.shear_deg <= 2 && p.scale >= 1.0 / 1.1 && p.scale <= 1.1 &&
               p.tscale >= 1.0 / 1.2 && p.tscale <= 1.2;
  }
  if (!in_range) bad += " augment-range";

  report(6, "contract-constants", bad.empty(),
         bad.empty() ? "all pinned values hold" : ("violated:" + bad));
}

// ---- 7: orthogonality -----------------------------------------------------------------

void criterion_orthogonality() {
  Rng rng(321);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng.uniform_int(96));
    const int n = 1 + static_cast<int>(rng.uniform_int(96));
    const double gain = trial % 3 == 0 ? 1.0 : rng.uniform(0.5, 2.0);
    Tensor<double> w = orthogonal_init<double>(m, n, gain, rng);
    // W Wᵀ (m<=n) or Wᵀ W (m>n) must equal gain² I
    const int k = std::min(m, n);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        double dot = 0;
        if (m <= n)
          for (int c = 0; c < n; ++c) dot += w(i, c) * w(j, c);
        else
          for (int r = 0; r < m; ++r) dot += w(r, i) * w(r, j);
        const double expect = i == j ? gain * gain : 0.0;
        worst = std::max(worst, std::fabs(dot - expect));
      }
  }
  report(7, "orthogonal-init", worst <= 1e-4,
         strfmt("max |W Wt - gain^2 I| = %.3g over 100 shapes", worst));
}

}  // namespace

int main() {
  const double t0 = now_s();
  std::printf("fwg acceptance suite\n");
  criterion_gradients();
  criterion_metric_oracle();
  criterion_ordering();
  criterion_convergence();
  criterion_determinism();
  criterion_constants();
  criterion_orthogonality();
  std::printf("%s (%d failure%s, %.0fs total)\n",
              g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              g_failures, g_failures == 1 ? "" : "s", now_s() - t0);
  return g_failures == 0 ? 0 : 1;
}
