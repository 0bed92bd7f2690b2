// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// fwg: frame-wise gesture recognition toolkit.
//
//   fwg gendata    synthesize a motion-defined gesture dataset
//   fwg train      train an architecture on a dataset
//   fwg eval       score a checkpoint against a labeled dataset
//   fwg predict    emit per-frame probabilities for one sequence
//   fwg gradcheck  compare every backward pass against finite differences
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fwg/evalmetrics.hpp"
#include "fwg/gradcheck.hpp"
#include "fwg/infer.hpp"
#include "fwg/trainer.hpp"

namespace fs = std::filesystem;
using namespace fwg;

namespace {

struct KvEcho {
  std::string text;
  template <typename V>
  void add(const std::string& key, const V& value) {
    if constexpr (std::is_same_v<V, std::string>)
      text += key + "=" + value + "\n";
    else if constexpr (std::is_same_v<V, bool>)
      text += key + "=" + (value ? "1" : "0") + "\n";
    else if constexpr (std::is_floating_point_v<V>)
      text += key + "=" + strfmt("%.12g", static_cast<double>(value)) + "\n";
    else
      text += key + "=" + std::to_string(value) + "\n";
  }
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const KvEcho& echo) {
  std::string m = "# fwg run manifest\n";
  m += strfmt("toolkit_version=%s\n", kToolkitVersion);
  m += "command=" + command + "\n";
  m += echo.text;
  write_file(dir / "manifest.txt", m);
}

// resolve --arch (builtin name) or --spec (inline string) + --variant
struct ArchChoice {
  ArchSpec spec;
  Variant variant;
  int window = 0;
};

ArchChoice resolve_arch(const std::string& arch, const std::string& spec_text,
                        const std::string& variant_text, const Dataset& ds,
                        int window_flag) {
  ArchChoice out;
  if (!arch.empty()) {
    const BuiltinSpec* b = find_builtin(arch);
    if (!b)
      throw UsageError("unknown architecture '" + arch + "'; available: " +
                       builtin_names_joined());
    out.spec = b->spec;
    out.variant = b->variant;
    out.window = b->eval_window;
  } else if (!spec_text.empty()) {
    out.spec = parse_arch(spec_text);
    out.variant = infer_variant(out.spec);
    if (!variant_text.empty()) {
      auto v = variant_from_name(variant_text);
      if (!v) throw UsageError("unknown variant '" + variant_text + "'");
      out.variant = *v;
    }
    out.window = window_flag > 0 ? window_flag : 32;
  } else {
    throw UsageError("pass --arch <builtin> or --spec <string>; builtins: " +
                     builtin_names_joined());
  }
  if (window_flag > 0) out.window = window_flag;

  const VideoSequence& s0 = ds.sequences.at(0);
  out.spec.input.channels = s0.channels();
  out.spec.input.height = s0.height();
  out.spec.input.width = s0.width();
  if (out.spec.input.frames <= 0) out.spec.input.frames = kFragmentLen;
  if (out.variant == Variant::tconv) out.spec.input.frames = out.window;
  if (out.variant == Variant::single) out.spec.input.frames = 1;
  return out;
}

// ---- gendata ------------------------------------------------------------

int cmd_gendata(const std::string& out_path, int classes, int sequences,
                int frames, int size, int width, uint64_t seed, bool noise_free,
                double noise_sigma) {
  GeneratorConfig cfg;
  cfg.frames = frames;
  cfg.height = size;
  cfg.width = width > 0 ? width : size;
  cfg.noise_free = noise_free;
  cfg.noise_sigma = noise_sigma;
  Dataset ds = gen_synthetic(sequences, classes, cfg, seed);
  save_dataset(out_path, ds);
  KvEcho echo;
  echo.add("out", out_path);
  echo.add("classes", classes);
  echo.add("sequences", sequences);
  echo.add("seed", seed);
  echo.text += cfg.describe();
  std::string manifest = "# fwg run manifest\n";
  manifest += strfmt("toolkit_version=%s\ncommand=gendata\n", kToolkitVersion);
  manifest += echo.text;
  write_file(out_path + ".manifest.txt", manifest);
  std::cout << strfmt("wrote %s: %d sequences, %lld frames, %d gesture classes\n",
                      out_path.c_str(), static_cast<int>(ds.sequences.size()),
                      static_cast<long long>(ds.total_frames()), ds.n_classes);
  std::cout << class_histogram(ds);
  return 0;
}

// ---- train ---------------------------------------------------------------

template <typename T>
int run_train(const ArchChoice& arch, const Dataset& tr, const Dataset& va,
              const TrainConfig& cfg, uint64_t model_seed, bool spatial_act,
              const fs::path& out_dir, KvEcho echo) {
  BuildOptions bo;
  bo.spatial_activation = spatial_act;
  Model<T> model = Model<T>::build(arch.spec, tr.n_classes + 1, arch.variant,
                                   model_seed, bo);
  std::cout << strfmt("built %s (%s), %lld parameters\n",
                      render_arch(model.spec()).c_str(),
                      variant_name(model.variant()),
                      static_cast<long long>(model.parameter_count()));
  OptimizerState<T> opt;
  TrainHistory hist = train(model, tr, va, cfg, &opt);

  CheckpointMeta meta;
  meta.window = arch.window;
  meta.epoch = hist.stopped_epoch;
  meta.rng_state = Rng(cfg.seed).state();
  meta.config_echo = echo.text;
  save_checkpoint((out_dir / "checkpoint.fwgc").string(), model, &opt, meta);
  write_file(out_dir / "history.csv", hist.to_csv());
  write_manifest(out_dir, "train", echo);
  std::cout << strfmt(
      "done: %d epochs (best %d), train loss %.6g -> %.6g, val best %.6g\n",
      static_cast<int>(hist.epochs.size()), hist.best_epoch,
      hist.initial_train_loss, hist.final_train_loss,
      hist.best_epoch >= 0
          ? hist.epochs[static_cast<size_t>(hist.best_epoch)].val_loss
          : 0.0);
  return 0;
}

// ---- gradcheck -------------------------------------------------------------

struct SuiteRow {
  std::string name;
  GradCheckResult result;
};

int cmd_gradcheck(double step, double tolerance, int max_components, bool corrupt) {
  std::vector<SuiteRow> rows;
  Rng rng(2024);

  auto check = [&](const std::string& name, auto f, Tensor<double>& x,
                   int cap = 0) {
    rows.push_back(SuiteRow{name, grad_check(f, x, step, cap, 7)});
  };

  {  // conv2d wrt input and kernels
    auto x = TensorD::randn({2, 3, 8, 8}, rng);
    auto k = TensorD::randn({4, 3, 3, 3}, rng, 0.4);
    Rng probe_rng = rng.fork(1);
    auto probe = TensorD::randn({2, 4, 4, 4}, probe_rng, 0.3);
    auto conv_loss = [&](const TensorD&) {
      auto y = ops::conv2d(x, k, ops::Pad::same);
      auto p = ops::max_pool2d(y);
      return ops::sum(ops::mul(p, probe.viewed(p.shape())));
    };
    check("conv2d.input", conv_loss, x);
    check("conv2d.kernels", conv_loss, k);
  }
  {  // temporal conv wrt input and kernels
    auto x = TensorD::randn({2, 6, 3, 4}, rng);
    auto k = TensorD::randn({4, 3, 3}, rng, 0.4);
    auto loss = [&](const TensorD&) {
      auto y = ops::conv1d_temporal(x, k, ops::Pad::same);
      return ops::mean(ops::mul(y, y));
    };
    check("conv1d_temporal.input", loss, x);
    check("conv1d_temporal.kernels", loss, k);
  }
  {  // pooling
    auto x2 = TensorD::randn({3, 6, 6}, rng);
    auto l2 = [&](const TensorD& v) {
      auto y = ops::max_pool2d(v);
      return ops::sum(ops::mul(y, y));
    };
    check("max_pool2d", l2, x2);
    auto x3 = TensorD::randn({4, 2, 4, 4}, rng);
    auto l3 = [&](const TensorD& v) {
      auto y = ops::max_pool3d(v);
      return ops::sum(ops::mul(y, y));
    };
    check("max_pool3d", l3, x3);
  }
  {  // affine wrt all three tensors
    auto x = TensorD::randn({5, 6}, rng);
    auto w = TensorD::randn({4, 6}, rng, 0.5);
    auto b = TensorD::randn({4}, rng, 0.2);
    auto loss = [&](const TensorD&) {
      auto y = ops::affine(x, w, b);
      return ops::mean(ops::mul(y, y));
    };
    check("affine.input", loss, x);
    check("affine.weight", loss, w);
    check("affine.bias", loss, b);
  }
  {  // leaky relu away from the kink (with the optional corruption hook)
    auto x = TensorD::randn({32}, rng);
    for (int64_t i = 0; i < x.size(); ++i)
      if (std::fabs(x[i]) < 0.05) x[i] = 0.5;
    int calls = 0;
    auto loss = [&](const TensorD& v) {
      ++calls;
      auto base = ops::sum(ops::leaky_relu(v));
      if (corrupt && calls > 1)  // corrupt only the re-evaluations
        return TensorD::scalar(base[0] + 0.05 * v[0]);
      return base;
    };
    check("leaky_relu", loss, x);
  }
  {  // softmax + cross-entropy
    auto logits = TensorD::randn({6, 5}, rng);
    std::vector<int> labels = {0, 2, 4, 1, 3, 2};
    auto loss = [&](const TensorD& v) {
      return ops::cross_entropy(ops::softmax(v), labels);
    };
    check("softmax_xent", loss, logits);
  }
  {  // 8-step bidirectional BPTT, both cell types
    const int T = 8, nv = 3, nh = 2;
    auto vin = TensorD::randn({T, nv}, rng);
    auto head_w = TensorD::randn({2, nh}, rng, 0.5);
    auto head_b = TensorD::randn({2}, rng, 0.1);
    std::vector<int> labels = {0, 1, 1, 0, 1, 0, 0, 1};

    auto mk_lstm = [&]() {
      auto m = [&](Shape s) { return TensorD::randn(std::move(s), rng, 0.5); };
      auto v = [&](int n) { return TensorD::randn({n}, rng, 0.1); };
      return LstmPeepholeCell<double>{m({nh, nv}), m({nh, nh}), v(nh), v(nh),
                                      m({nh, nv}), m({nh, nh}), v(nh), v(nh),
                                      m({nh, nv}), m({nh, nh}), v(nh), v(nh),
                                      m({nh, nv}), m({nh, nh}), v(nh)};
    };
    auto lstm_f = mk_lstm();
    auto lstm_b = mk_lstm();
    auto lstm_loss = [&](const TensorD&) {
      auto v3 = ops::reshape(vin, Shape{1, T, nv});
      std::vector<TensorD> steps;
      for (int t = 0; t < T; ++t)
        steps.push_back(ops::reshape(ops::time_slice(v3, t), Shape{nv}));
      auto state = bidirectional_run(steps, lstm_f, lstm_b);
      ClassifierHead<double> head{head_w, head_b};
      return ops::cross_entropy(classify_frames(state, head), labels);
    };
    check("lstm_bptt_8.input", lstm_loss, vin);
    check("lstm_bptt_8.w_ih", lstm_loss, lstm_f.w_ih);
    check("lstm_bptt_8.peep_o", lstm_loss, lstm_f.peep_o);
    check("lstm_bptt_8.w_cx", lstm_loss, lstm_b.w_cx);

    RnnStandardCell<double> std_f{TensorD::randn({nh, nv}, rng, 0.5),
                                  TensorD::randn({nh, nh}, rng, 0.5),
                                  TensorD::randn({nh}, rng, 0.1)};
    RnnStandardCell<double> std_b{TensorD::randn({nh, nv}, rng, 0.5),
                                  TensorD::randn({nh, nh}, rng, 0.5),
                                  TensorD::randn({nh}, rng, 0.1)};
    auto std_loss = [&](const TensorD&) {
      auto v3 = ops::reshape(vin, Shape{1, T, nv});
      std::vector<TensorD> steps;
      for (int t = 0; t < T; ++t)
        steps.push_back(ops::reshape(ops::time_slice(v3, t), Shape{nv}));
      auto state = bidirectional_run(steps, std_f, std_b);
      ClassifierHead<double> head{head_w, head_b};
      return ops::cross_entropy(classify_frames(state, head), labels);
    };
    check("rnn_std_bptt_8.input", std_loss, vin);
    check("rnn_std_bptt_8.w_rec", std_loss, std_f.w_rec);
    check("rnn_std_bptt_8.w_in", std_loss, std_b.w_in);
  }
  {  // the full factorized-conv + bidirectional LSTM graph, 4 frames of 8x8
    ArchSpec spec = find_builtin("tconv_lstm_desk")->spec;
    spec.input = InputSignature{1, 4, 8, 8};
    Model<double> model =
        Model<double>::build(spec, 3, Variant::tconv_lstm, 99);
    auto input = TensorD::rand_uniform({1, 4, 1, 8, 8}, rng, 0.05, 0.95);
    std::vector<int> labels = {1, 0, 2, 1};
    auto loss = [&](const TensorD&) {
      Tensor<double> probs = model.forward_sequence(input, false, nullptr);
      auto flat = ops::reshape(probs, Shape{4, 3});
      return ops::cross_entropy(flat, labels);
    };
    check("tconv_lstm_graph.input", loss, input, max_components);
    auto& params = model.parameters();
    for (int i = 0; i < params.count(); ++i)
      check("tconv_lstm_graph." + params.name(i), loss, params.at(i),
            max_components);
  }

  bool ok = true;
  std::cout << strfmt("%-36s %10s %14s  %s\n", "component", "checked",
                      "max_rel_err", "status");
  for (const auto& r : rows) {
    const bool pass = r.result.max_rel_err <= tolerance;
    ok = ok && pass;
    std::cout << strfmt("%-36s %10lld %14.3e  %s\n", r.name.c_str(),
                        static_cast<long long>(r.result.components_checked),
                        r.result.max_rel_err, pass ? "PASS" : "FAIL");
  }
  std::cout << (ok ? "gradcheck: all components within tolerance\n"
                   : "gradcheck: FAILURES above tolerance\n");
  return ok ? 0 : 3;
}

// ---- eval / predict ----------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const fs::path& out_dir, int window_flag, int threads,
             bool include_absent, KvEcho echo) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data_path);
  if (ds.sequences.empty()) throw DataError("dataset has no sequences");
  if (ds.sequences[0].channels() != lc.model.input().channels)
    throw DataError(strfmt("checkpoint expects %d-channel input, dataset has %d",
                           lc.model.input().channels, ds.sequences[0].channels()));
  if (ds.n_classes + 1 != lc.model.n_classes())
    throw DataError(strfmt("checkpoint has %d classes, dataset needs %d",
                           lc.model.n_classes(), ds.n_classes + 1));
  const int window = window_flag > 0 ? window_flag : lc.meta.window;

  std::vector<Tensor<float>> tracks = predict_dataset(lc.model, ds, window, threads);
  EvalOptions opts;
  opts.include_absent_pairs = include_absent;
  EvalReport rep = evaluate_predictions(ds, tracks, opts);

  fs::create_directories(out_dir);
  write_file(out_dir / "report.txt", rep.to_kv());
  for (size_t s = 0; s < tracks.size(); ++s)
    write_file(out_dir / strfmt("probs_seq%03zu.csv", s),
               probs_csv(tracks[s], ds.sequences[s].labels));
  write_manifest(out_dir, "eval", echo);
  std::cout << rep.to_kv();
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_path,
                int seq_index, const std::string& out_csv,
                const std::string& out_track, int window_flag) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data_path);
  if (seq_index < 0 || seq_index >= static_cast<int>(ds.sequences.size()))
    throw DataError(strfmt("sequence %d out of range (dataset has %zu)",
                           seq_index, ds.sequences.size()));
  const int window = window_flag > 0 ? window_flag : lc.meta.window;
  Tensor<float> probs =
      predict_sequence(lc.model, ds.sequences[static_cast<size_t>(seq_index)], window);
  write_file(out_csv,
             probs_csv(probs, ds.sequences[static_cast<size_t>(seq_index)].labels));
  if (!out_track.empty()) save_prediction_track(out_track, probs);
  KvEcho echo;
  echo.add("checkpoint", ckpt_path);
  echo.add("data", data_path);
  echo.add("sequence", seq_index);
  echo.add("window", window);
  std::string manifest = "# fwg run manifest\n";
  manifest += strfmt("toolkit_version=%s\ncommand=predict\n", kToolkitVersion);
  manifest += echo.text;
  write_file(out_csv + ".manifest.txt", manifest);
  std::cout << strfmt("wrote %s (%d frames x %d classes)\n", out_csv.c_str(),
                      probs.dim(0), probs.dim(1));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fwg: frame-wise gesture recognition toolkit"};
  app.set_config("--config", "", "key=value config file; flags take precedence");
  app.require_subcommand(1);

  // gendata
  auto* gen = app.add_subcommand("gendata", "synthesize a gesture dataset");
  std::string gen_out = "dataset.fwgd";
  int gen_classes = 5, gen_sequences = 60, gen_frames = 256, gen_size = 16,
      gen_width = 0;
  uint64_t gen_seed = 1;
  bool gen_noise_free = false;
  double gen_noise = 0.04;
  gen->add_option("--out", gen_out, "output container path");
  gen->add_option("--classes", gen_classes, "gesture classes (2..8)");
  gen->add_option("--sequences", gen_sequences, "number of sequences");
  gen->add_option("--frames", gen_frames, "frames per sequence");
  gen->add_option("--size", gen_size, "frame height (and width unless --width)");
  gen->add_option("--width", gen_width, "frame width");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_flag("--noise-free", gen_noise_free, "disable pixel noise");
  gen->add_option("--noise-sigma", gen_noise, "pixel noise stddev");

  // train
  auto* tr = app.add_subcommand("train", "train an architecture");
  std::string tr_arch, tr_spec, tr_variant, tr_data, tr_val, tr_out = "run",
              tr_precision = "f32";
  TrainConfig tcfg;
  uint64_t tr_model_seed = 0;
  bool tr_no_augment = false, tr_spatial_act = false;
  int tr_window = 0;
  tr->add_option("--arch", tr_arch, "builtin architecture name");
  tr->add_option("--spec", tr_spec, "inline architecture string");
  tr->add_option("--variant", tr_variant, "variant for --spec (inferred otherwise)");
  tr->add_option("--data", tr_data, "training dataset")->required();
  tr->add_option("--val", tr_val, "validation dataset")->required();
  tr->add_option("--out", tr_out, "output directory");
  tr->add_option("--seed", tcfg.seed, "training seed");
  tr->add_option("--model-seed", tr_model_seed, "init seed (default: --seed)");
  tr->add_option("--epochs", tcfg.max_epochs, "epoch budget");
  tr->add_option("--steps", tcfg.steps_per_epoch, "steps per epoch (0 = auto)");
  tr->add_option("--batch", tcfg.batch, "mini-batch size");
  tr->add_option("--lr", tcfg.lr, "base learning rate");
  tr->add_option("--decay", tcfg.decay, "per-epoch lr decay");
  tr->add_option("--patience", tcfg.patience, "early-stopping patience");
  tr->add_option("--fragment", tcfg.fragment_len, "fragment length (recurrent)");
  tr->add_option("--window", tr_window, "training/eval window (non-recurrent)");
  tr->add_option("--val-samples", tcfg.val_samples, "fixed validation sample size");
  tr->add_flag("--no-augment", tr_no_augment, "disable online augmentation");
  tr->add_flag("--pretrain-finetune", tcfg.pretrain_finetune,
               "frame-by-frame pretraining phase (temporal pooling)");
  tr->add_option("--pretrain-epochs", tcfg.pretrain_epochs,
                 "pretraining epochs (0 = epochs/4)");
  tr->add_flag("--spatial-activation", tr_spatial_act,
               "activate the spatial conv step as well");
  tr->add_option("--precision", tr_precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));

  // eval
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out = "eval";
  int ev_window = 0, ev_threads = 2;
  bool ev_absent = false;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--data", ev_data, "labeled dataset")->required();
  ev->add_option("--out", ev_out, "output directory");
  ev->add_option("--window", ev_window, "sliding window override");
  ev->add_option("--threads", ev_threads, "evaluation workers");
  ev->add_flag("--include-absent-pairs", ev_absent,
               "count absent-absent (sequence,class) pairs as 1");

  // predict
  auto* pr = app.add_subcommand("predict", "per-frame probabilities for one sequence");
  std::string pr_ckpt, pr_data, pr_csv = "probs.csv", pr_track;
  int pr_seq = 0, pr_window = 0;
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint path")->required();
  pr->add_option("--data", pr_data, "dataset containing the sequence")->required();
  pr->add_option("--sequence", pr_seq, "sequence index");
  pr->add_option("--out", pr_csv, "output CSV path");
  pr->add_option("--track", pr_track, "optional binary track output");
  pr->add_option("--window", pr_window, "sliding window override");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  double gc_step = 1e-5, gc_tol = 1e-4;
  int gc_max = 160;
  bool gc_corrupt = false;
  gc->add_option("--step", gc_step, "finite-difference step");
  gc->add_option("--tolerance", gc_tol, "max relative error");
  gc->add_option("--max-components", gc_max,
                 "per-tensor component cap for the full-graph check");
  gc->add_flag("--corrupt", gc_corrupt,
               "negative control: corrupt one backward pass");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*gen)
      return cmd_gendata(gen_out, gen_classes, gen_sequences, gen_frames,
                         gen_size, gen_width, gen_seed, gen_noise_free, gen_noise);
    if (*tr) {
      Dataset train_ds = load_dataset(tr_data);
      Dataset val_ds = load_dataset(tr_val);
      if (train_ds.n_classes != val_ds.n_classes)
        throw DataError("train and validation class counts differ");
      tcfg.augment = !tr_no_augment;
      ArchChoice arch = resolve_arch(tr_arch, tr_spec, tr_variant, train_ds, tr_window);
      if (arch.variant == Variant::tpool && tr_window == 0 &&
          arch.spec.find(ArchTag::TPOOL)->pool_mode == TPoolMode::max)
        arch.window = 16;
      tcfg.window = arch.window > 0 ? arch.window : tcfg.window;
      const uint64_t model_seed = tr_model_seed ? tr_model_seed : tcfg.seed;

      fs::create_directories(tr_out);
      KvEcho echo;
      echo.add("arch", render_arch(arch.spec));
      echo.add("variant", std::string(variant_name(arch.variant)));
      echo.add("data", tr_data);
      echo.add("val", tr_val);
      echo.add("precision", tr_precision);
      echo.add("seed", tcfg.seed);
      echo.add("model_seed", model_seed);
      echo.add("batch", tcfg.batch);
      echo.add("lr", tcfg.lr);
      echo.add("decay", tcfg.decay);
      echo.add("patience", tcfg.patience);
      echo.add("epochs", tcfg.max_epochs);
      echo.add("steps_per_epoch", tcfg.steps_per_epoch);
      echo.add("fragment", tcfg.fragment_len);
      echo.add("window", tcfg.window);
      echo.add("augment", tcfg.augment);
      echo.add("pretrain_finetune", tcfg.pretrain_finetune);
      echo.add("spatial_activation", tr_spatial_act);
      echo.add("val_samples", tcfg.val_samples);
      if (tr_precision == "f64")
        return run_train<double>(arch, train_ds, val_ds, tcfg, model_seed,
                                 tr_spatial_act, tr_out, echo);
      return run_train<float>(arch, train_ds, val_ds, tcfg, model_seed,
                              tr_spatial_act, tr_out, echo);
    }
    if (*ev) {
      KvEcho echo;
      echo.add("checkpoint", ev_ckpt);
      echo.add("data", ev_data);
      echo.add("window", ev_window);
      echo.add("threads", ev_threads);
      echo.add("include_absent_pairs", ev_absent);
      return cmd_eval(ev_ckpt, ev_data, ev_out, ev_window, ev_threads, ev_absent,
                      echo);
    }
    if (*pr)
      return cmd_predict(pr_ckpt, pr_data, pr_seq, pr_csv, pr_track, pr_window);
    if (*gc) return cmd_gradcheck(gc_step, gc_tol, gc_max, gc_corrupt);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
