// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frame-wise scoring: per-(sequence,class) Jaccard overlap and its mean,
// per-class precision/recall with macro averages, and the majority-vote
// error rate over annotated gesture intervals.
//
// Hardening is argmax with lowest-index tie-break everywhere. The silence
// class (0) never enters the Jaccard mean or the macro precision/recall.
#pragma once

#include <string>
#include <vector>

#include "fwg/dataio.hpp"
#include "fwg/tensor.hpp"

namespace fwg {

struct BinaryTrack {
  std::vector<uint8_t> bits;

  int64_t count() const {
    int64_t n = 0;
    for (uint8_t b : bits) n += b;
    return n;
  }
  bool empty_track() const { return count() == 0; }
};

// |a AND b| / |a OR b|; both-empty pairs score 1 (the aggregation layer
// decides whether such pairs are counted at all).
double jaccard(const BinaryTrack& a, const BinaryTrack& b);

// argmax per row, lowest index wins ties
std::vector<int> harden(const Tensor<float>& probs);

// Per-class occupancy tracks for classes 0..n_classes (index = class id);
// every frame sets exactly one bit across the set.
std::vector<BinaryTrack> probabilities_to_tracks(const Tensor<float>& probs,
                                                 int n_classes);
std::vector<BinaryTrack> tracks_from_hard(const std::vector<int>& hard,
                                          int n_classes);
std::vector<BinaryTrack> tracks_from_labels(const std::vector<uint16_t>& labels,
                                            int n_classes);

// Mean Jaccard over all (sequence, gesture class) pairs. Outer index:
// sequence; inner: class id 1..N stored at [cls] (index 0 unused or silence,
// ignored). Pairs absent from both truth and prediction are skipped unless
// include_absent_pairs, in which case they count as 1 over the full N*S
// denominator.
double mean_jaccard(const std::vector<std::vector<BinaryTrack>>& truth,
                    const std::vector<std::vector<BinaryTrack>>& pred,
                    bool include_absent_pairs = false);

struct PerClassPR {
  // index = gesture class id 1..N; [0] unused
  std::vector<double> precision, recall;
  std::vector<uint8_t> precision_valid, recall_valid;  // zero-denominator flags
  double macro_precision = 0.0;
  double macro_recall = 0.0;
};

// Frame-level counts pooled over sequences; classes with a zero denominator
// are flagged and left out of the macro mean.
PerClassPR precision_recall(const std::vector<std::vector<int>>& pred,
                            const std::vector<std::vector<uint16_t>>& truth,
                            int n_classes);

// Majority-vote error over annotated gesture intervals; ties vote for the
// lowest class id. Throws DataError when there are no intervals at all.
double isolated_error_rate(const std::vector<std::vector<int>>& pred,
                           const std::vector<std::vector<GestureAnnotation>>& annotations);

struct EvalReport {
  double jaccard_avg = 0.0;
  double precision_macro = 0.0;
  double recall_macro = 0.0;
  double error_rate_isolated = 0.0;
  PerClassPR pr;
  int64_t jaccard_pairs = 0;
  int64_t intervals = 0;

  std::string to_kv() const;  // one metric per line, key=value
};

struct EvalOptions {
  bool include_absent_pairs = false;
};

// Scores per-frame probability tracks (one [T,K] tensor per sequence)
// against dataset ground truth.
EvalReport evaluate_predictions(const Dataset& truth,
                                const std::vector<Tensor<float>>& prob_tracks,
                                EvalOptions opts = {});

// Per-frame probability rows next to the truth label, for plotting.
std::string probs_csv(const Tensor<float>& probs, const std::vector<uint16_t>& labels);

// Prediction track container: u32 T, u32 K, then T*K little-endian f32.
void save_prediction_track(const std::string& path, const Tensor<float>& probs);
Tensor<float> load_prediction_track(const std::string& path);

}  // namespace fwg
