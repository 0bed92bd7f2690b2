// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset container, synthetic motion-defined gesture generator, online
// augmentation, fragment sampling and sliding-window construction.
//
// The generator draws one constant-appearance blob per sequence moving on a
// ring around the frame center. Gesture classes differ only in how the blob
// traverses the ring (direction, out-and-back, wobble, double speed), never
// in appearance, so single frames carry no class information; between
// gestures the blob rests in place ("silence", label 0).
#pragma once

#include <string>
#include <vector>

#include "fwg/rng.hpp"
#include "fwg/tensor.hpp"

namespace fwg {

struct GestureAnnotation {
  int cls = 0;        // 1-based gesture class
  int start = 0;      // first frame
  int end = 0;        // last frame, inclusive
};

struct VideoSequence {
  Tensor<float> frames;               // [T,C,H,W], values in [0,1]
  std::vector<uint16_t> labels;       // length T, 0 = silence
  std::vector<GestureAnnotation> annotations;

  int frames_count() const { return frames.dim(0); }
  int channels() const { return frames.dim(1); }
  int height() const { return frames.dim(2); }
  int width() const { return frames.dim(3); }
  void validate() const;
};

struct Dataset {
  std::vector<VideoSequence> sequences;
  int n_classes = 0;        // gesture classes; labels run 0..n_classes
  std::string provenance;   // key=value lines echoed from the generator config

  int64_t total_frames() const {
    int64_t n = 0;
    for (const auto& s : sequences) n += s.frames_count();
    return n;
  }
};

struct GeneratorConfig {
  int frames = 256;
  int height = 16;
  int width = 16;
  double ring_radius_frac = 0.28;  // of min(H,W)
  double sprite_sigma_frac = 0.07;
  double noise_sigma = 0.04;
  bool noise_free = false;
  // Slow gestures relative to the 32-frame pooling window, so a window's
  // trail covers a class-dependent fraction of the ring instead of wrapping
  // it for every class.
  int min_gesture = 48, max_gesture = 80;  // duration range, frames
  int min_gap = 8, max_gap = 24;           // silence range, frames

  std::string describe() const;
};

inline constexpr int kMaxGestureClasses = 8;

// Deterministic in (config, seed); class priors uniform.
Dataset gen_synthetic(int n_sequences, int n_classes, const GeneratorConfig& cfg,
                      uint64_t seed);

// Noise-free blob frame for one class at gesture-progress u in [0,1],
// starting angle theta0: the constructive single-frame ambiguity witness.
Tensor<float> render_gesture_frame(const GeneratorConfig& cfg, int cls,
                                   double theta0, double u);
// Ring angle reached by class cls at progress u.
double gesture_angle(int cls, double theta0, double u);

// ---- augmentation --------------------------------------------------------

struct AugmentParams {
  double dy = 0.0;      // vertical translation, px, in [-5,5]
  double dx = 0.0;      // horizontal, px, in [-10,10]
  double rot_deg = 0.0;   // in [-2,2]
  double shear_deg = 0.0; // in [-2,2]
  double scale = 1.0;     // in [1/1.1, 1.1]
  double tscale = 1.0;    // in [1/1.2, 1.2]

  static AugmentParams identity() { return {}; }
  void validate() const;
};

// One random draw per video fragment; scale factors are sampled
// symmetrically in log space.
AugmentParams sample_augment_params(Rng& rng);

enum class Interp { bilinear, nearest };

// One affine transform (translate . rotate . shear . scale about the frame
// center) applied identically to every frame; zero fill outside.
Tensor<float> apply_affine(const Tensor<float>& frames, const AugmentParams& p,
                           Interp interp = Interp::bilinear);

// Resamples the time axis to t_out frames: pixel values by linear
// interpolation between neighbouring frames, labels by nearest frame.
void resample_time(const Tensor<float>& frames, const std::vector<uint16_t>& labels,
                   int t_out, Tensor<float>* out_frames,
                   std::vector<uint16_t>* out_labels);

// ---- fragments and windows -------------------------------------------------

inline constexpr int kFragmentLen = 64;
inline constexpr int kEvalMaskBegin = 16;  // the kept middle half
inline constexpr int kEvalMaskEnd = 48;    // exclusive

struct Fragment {
  Tensor<float> frames;           // [len,C,H,W]
  std::vector<uint16_t> labels;   // length len
  int mask_begin = kEvalMaskBegin;
  int mask_end = kEvalMaskEnd;
  bool padded = false;  // sequence was shorter than the fragment
};

// Uniformly random fragment start; sequences shorter than len are completed
// by edge replication and flagged.
Fragment sample_fragment(const VideoSequence& seq, Rng& rng, int len = kFragmentLen);

// Deterministic fragment at a given start (clamped), same padding policy.
Fragment fragment_at(const VideoSequence& seq, int start, int len = kFragmentLen);

// Augmented fragment: temporal scaling picks round(len*tscale) source frames
// which are resampled back to len, then one affine transform is applied.
Fragment sample_augmented_fragment(const VideoSequence& seq, Rng& rng,
                                   const AugmentParams& p, int len = kFragmentLen,
                                   Interp interp = Interp::bilinear);

// Centered window of width w at frame `center` with edge replication.
// Target label is the center frame's.
Tensor<float> window_at(const VideoSequence& seq, int center, int w);

// Number of single-step sliding windows = frame count, for any width.
inline int sliding_window_count(const VideoSequence& seq, int /*w*/) {
  return seq.frames_count();
}

// ---- container format -------------------------------------------------------
//
//   magic "FWGD", version u16, n_classes u16, n_sequences u32,
//   provenance string (u32 length + bytes), then per sequence:
//   T,H,W,C u32, n_annotations u32, frames f32[T*C*H*W] (t-major),
//   labels u16[T], annotations (cls u16, start u32, end u32).
// All fields little-endian.

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

std::string class_histogram(const Dataset& ds);

}  // namespace fwg
