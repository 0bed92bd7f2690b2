// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#include "fwg/evalmetrics.hpp"

#include <fstream>

#include "fwg/common.hpp"

namespace fwg {

double jaccard(const BinaryTrack& a, const BinaryTrack& b) {
  check_shape(a.bits.size() == b.bits.size(),
              strfmt("jaccard: track lengths differ (%zu vs %zu)", a.bits.size(),
                     b.bits.size()));
  int64_t inter = 0, uni = 0;
  for (size_t t = 0; t < a.bits.size(); ++t) {
    inter += a.bits[t] & b.bits[t];
    uni += a.bits[t] | b.bits[t];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<int> harden(const Tensor<float>& probs) {
  check_shape(probs.ndim() == 2, "harden: expected [T,K] probabilities");
  const int T = probs.dim(0), K = probs.dim(1);
  std::vector<int> out(static_cast<size_t>(T), 0);
  const float* p = probs.data();
  for (int t = 0; t < T; ++t) {
    const float* row = p + static_cast<int64_t>(t) * K;
    int best = 0;
    for (int k = 1; k < K; ++k)
      if (row[k] > row[best]) best = k;
    out[static_cast<size_t>(t)] = best;
  }
  return out;
}

std::vector<BinaryTrack> tracks_from_hard(const std::vector<int>& hard,
                                          int n_classes) {
  std::vector<BinaryTrack> tracks(static_cast<size_t>(n_classes) + 1);
  for (auto& tr : tracks) tr.bits.assign(hard.size(), 0);
  for (size_t t = 0; t < hard.size(); ++t) {
    check_shape(hard[t] >= 0 && hard[t] <= n_classes,
                "track class id out of range");
    tracks[static_cast<size_t>(hard[t])].bits[t] = 1;
  }
  return tracks;
}

std::vector<BinaryTrack> probabilities_to_tracks(const Tensor<float>& probs,
                                                 int n_classes) {
  check_shape(probs.dim(1) == n_classes + 1,
              strfmt("probabilities_to_tracks: %d columns for %d classes",
                     probs.dim(1), n_classes));
  return tracks_from_hard(harden(probs), n_classes);
}

std::vector<BinaryTrack> tracks_from_labels(const std::vector<uint16_t>& labels,
                                            int n_classes) {
  std::vector<int> hard(labels.begin(), labels.end());
  return tracks_from_hard(hard, n_classes);
}

double mean_jaccard(const std::vector<std::vector<BinaryTrack>>& truth,
                    const std::vector<std::vector<BinaryTrack>>& pred,
                    bool include_absent_pairs) {
  check_shape(truth.size() == pred.size(), "mean_jaccard: sequence count mismatch");
  double sum = 0.0;
  int64_t counted = 0;
  int64_t full = 0;
  for (size_t s = 0; s < truth.size(); ++s) {
    check_shape(truth[s].size() == pred[s].size(),
                "mean_jaccard: class count mismatch");
    for (size_t n = 1; n < truth[s].size(); ++n) {  // gesture classes only
      ++full;
      const bool absent =
          truth[s][n].empty_track() && pred[s][n].empty_track();
      if (absent && !include_absent_pairs) continue;
      sum += jaccard(truth[s][n], pred[s][n]);
      ++counted;
    }
  }
  const int64_t denom = include_absent_pairs ? full : counted;
  if (denom == 0) return 0.0;
  return sum / static_cast<double>(denom);
}

PerClassPR precision_recall(const std::vector<std::vector<int>>& pred,
                            const std::vector<std::vector<uint16_t>>& truth,
                            int n_classes) {
  check_shape(pred.size() == truth.size(), "precision_recall: sequence count");
  std::vector<int64_t> tp(static_cast<size_t>(n_classes) + 1, 0);
  std::vector<int64_t> fp(static_cast<size_t>(n_classes) + 1, 0);
  std::vector<int64_t> fn(static_cast<size_t>(n_classes) + 1, 0);
  for (size_t s = 0; s < pred.size(); ++s) {
    check_shape(pred[s].size() == truth[s].size(), "precision_recall: length");
    for (size_t t = 0; t < pred[s].size(); ++t) {
      const int p = pred[s][t];
      const int g = truth[s][t];
      if (p == g) {
        if (p <= n_classes) ++tp[static_cast<size_t>(p)];
      } else {
        if (p <= n_classes) ++fp[static_cast<size_t>(p)];
        if (g <= n_classes) ++fn[static_cast<size_t>(g)];
      }
    }
  }
  PerClassPR out;
  out.precision.assign(static_cast<size_t>(n_classes) + 1, 0.0);
  out.recall.assign(static_cast<size_t>(n_classes) + 1, 0.0);
  out.precision_valid.assign(static_cast<size_t>(n_classes) + 1, 0);
  out.recall_valid.assign(static_cast<size_t>(n_classes) + 1, 0);
  double psum = 0.0, rsum = 0.0;
  int64_t pcount = 0, rcount = 0;
  for (int c = 1; c <= n_classes; ++c) {
    const size_t k = static_cast<size_t>(c);
    if (tp[k] + fp[k] > 0) {
      out.precision[k] = static_cast<double>(tp[k]) / (tp[k] + fp[k]);
      out.precision_valid[k] = 1;
      psum += out.precision[k];
      ++pcount;
    }
    if (tp[k] + fn[k] > 0) {
      out.recall[k] = static_cast<double>(tp[k]) / (tp[k] + fn[k]);
      out.recall_valid[k] = 1;
      rsum += out.recall[k];
      ++rcount;
    }
  }
  out.macro_precision = pcount ? psum / pcount : 0.0;
  out.macro_recall = rcount ? rsum / rcount : 0.0;
  return out;
}

double isolated_error_rate(
    const std::vector<std::vector<int>>& pred,
    const std::vector<std::vector<GestureAnnotation>>& annotations) {
  check_shape(pred.size() == annotations.size(),
              "isolated_error_rate: sequence count");
  int64_t total = 0, wrong = 0;
  for (size_t s = 0; s < pred.size(); ++s) {
    for (const auto& a : annotations[s]) {
      check_shape(a.start >= 0 && a.end < static_cast<int>(pred[s].size()),
                  "isolated_error_rate: annotation outside prediction track");
      std::vector<int64_t> votes;
      for (int t = a.start; t <= a.end; ++t) {
        const int p = pred[s][static_cast<size_t>(t)];
        if (p >= static_cast<int>(votes.size()))
          votes.resize(static_cast<size_t>(p) + 1, 0);
        ++votes[static_cast<size_t>(p)];
      }
      int best = 0;
      int64_t best_votes = -1;
      for (size_t c = 0; c < votes.size(); ++c)
        if (votes[c] > best_votes) {  // lowest class id wins ties
          best_votes = votes[c];
          best = static_cast<int>(c);
        }
      ++total;
      if (best != a.cls) ++wrong;
    }
  }
  if (total == 0)
    throw DataError("isolated_error_rate: no annotated gesture intervals");
  return static_cast<double>(wrong) / static_cast<double>(total);
}

EvalReport evaluate_predictions(const Dataset& truth,
                                const std::vector<Tensor<float>>& prob_tracks,
                                EvalOptions opts) {
  check_shape(truth.sequences.size() == prob_tracks.size(),
              "evaluate_predictions: one probability track per sequence");
  const int K = truth.n_classes;
  std::vector<std::vector<BinaryTrack>> truth_tracks, pred_tracks;
  std::vector<std::vector<int>> hard;
  std::vector<std::vector<uint16_t>> labels;
  std::vector<std::vector<GestureAnnotation>> anns;
  for (size_t s = 0; s < truth.sequences.size(); ++s) {
    const VideoSequence& seq = truth.sequences[s];
    check_shape(prob_tracks[s].ndim() == 2 &&
                    prob_tracks[s].dim(0) == seq.frames_count() &&
                    prob_tracks[s].dim(1) == K + 1,
                strfmt("evaluate_predictions: track %zu has shape %s, expected "
                       "[%d,%d]",
                       s, shape_str(prob_tracks[s].shape()).c_str(),
                       seq.frames_count(), K + 1));
    hard.push_back(harden(prob_tracks[s]));
    truth_tracks.push_back(tracks_from_labels(seq.labels, K));
    pred_tracks.push_back(tracks_from_hard(hard.back(), K));
    labels.push_back(seq.labels);
    anns.push_back(seq.annotations);
  }
  EvalReport rep;
  rep.jaccard_avg = mean_jaccard(truth_tracks, pred_tracks, opts.include_absent_pairs);
  rep.pr = precision_recall(hard, labels, K);
  rep.precision_macro = rep.pr.macro_precision;
  rep.recall_macro = rep.pr.macro_recall;
  rep.error_rate_isolated = isolated_error_rate(hard, anns);
  for (const auto& a : anns) rep.intervals += static_cast<int64_t>(a.size());
  for (size_t s = 0; s < truth_tracks.size(); ++s)
    for (size_t n = 1; n < truth_tracks[s].size(); ++n)
      if (opts.include_absent_pairs || !truth_tracks[s][n].empty_track() ||
          !pred_tracks[s][n].empty_track())
        ++rep.jaccard_pairs;
  return rep;
}

std::string EvalReport::to_kv() const {
  std::string s;
  s += strfmt("jaccard_avg=%.12g\n", jaccard_avg);
  s += strfmt("precision_macro=%.12g\n", precision_macro);
  s += strfmt("recall_macro=%.12g\n", recall_macro);
  s += strfmt("error_rate_isolated=%.12g\n", error_rate_isolated);
  s += strfmt("jaccard_pairs=%lld\n", static_cast<long long>(jaccard_pairs));
  s += strfmt("intervals=%lld\n", static_cast<long long>(intervals));
  for (size_t c = 1; c < pr.precision.size(); ++c) {
    if (pr.precision_valid[c])
      s += strfmt("precision_class_%zu=%.12g\n", c, pr.precision[c]);
    else
      s += strfmt("precision_class_%zu=excluded\n", c);
    if (pr.recall_valid[c])
      s += strfmt("recall_class_%zu=%.12g\n", c, pr.recall[c]);
    else
      s += strfmt("recall_class_%zu=excluded\n", c);
  }
  return s;
}

std::string probs_csv(const Tensor<float>& probs, const std::vector<uint16_t>& labels) {
  check_shape(probs.ndim() == 2, "probs_csv: expected [T,K]");
  const int T = probs.dim(0), K = probs.dim(1);
  check_shape(labels.empty() || static_cast<int>(labels.size()) == T,
              "probs_csv: label count mismatch");
  std::string s = "frame,truth";
  for (int k = 0; k < K; ++k) s += strfmt(",p%d", k);
  s += "\n";
  for (int t = 0; t < T; ++t) {
    s += strfmt("%d,%d", t, labels.empty() ? -1 : static_cast<int>(labels[static_cast<size_t>(t)]));
    for (int k = 0; k < K; ++k) s += strfmt(",%.9g", static_cast<double>(probs(t, k)));
    s += "\n";
  }
  return s;
}

void save_prediction_track(const std::string& path, const Tensor<float>& probs) {
  check_shape(probs.ndim() == 2, "save_prediction_track: expected [T,K]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  write_u32(os, static_cast<uint32_t>(probs.dim(0)));
  write_u32(os, static_cast<uint32_t>(probs.dim(1)));
  for (int64_t i = 0; i < probs.size(); ++i) write_f32(os, probs[i]);
  if (!os) throw DataError("write failed for " + path);
}

Tensor<float> load_prediction_track(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  const uint32_t T = read_u32(is), K = read_u32(is);
  if (T == 0 || K == 0 || static_cast<uint64_t>(T) * K > (1ull << 30))
    throw DataError(path + ": implausible track header");
  Tensor<float> out(Shape{static_cast<int>(T), static_cast<int>(K)});
  for (int64_t i = 0; i < out.size(); ++i) out[i] = read_f32(is);
  if (!is) throw DataError(path + ": truncated track payload");
  return out;
}

}  // namespace fwg
