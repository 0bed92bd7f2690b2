// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#include "fwg/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "fwg/common.hpp"

namespace fwg {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double tri(double u) { return u < 0.5 ? 2.0 * u : 2.0 * (1.0 - u); }
// three narrow swings around the rest angle, +-45 degrees
double pendulum(double u) { return 0.125 * std::sin(3.0 * kTwoPi * u); }

struct RingGeometry {
  double cx, cy, radius, sigma;

  static RingGeometry from(const GeneratorConfig& cfg) {
    const double mind = std::min(cfg.height, cfg.width);
    RingGeometry g;
    g.cx = (cfg.width - 1) / 2.0;
    g.cy = (cfg.height - 1) / 2.0;
    g.radius = cfg.ring_radius_frac * mind;
    g.sigma = cfg.sprite_sigma_frac * mind;
    if (g.radius + 3.0 * g.sigma > mind / 2.0)
      throw DataError(strfmt(
          "sprite does not fit the frame: ring %.2f + 3*sigma %.2f exceeds "
          "half extent %.2f",
          g.radius, 3.0 * g.sigma, mind / 2.0));
    return g;
  }
};

// Gaussian blob at ring angle theta, written into frame channel 0.
void render_blob(float* frame, int H, int W, const RingGeometry& g, double theta) {
  const double px = g.cx + g.radius * std::cos(theta);
  const double py = g.cy + g.radius * std::sin(theta);
  const double inv2s2 = 1.0 / (2.0 * g.sigma * g.sigma);
  const int r0 = std::max(0, static_cast<int>(std::floor(py - 4 * g.sigma)));
  const int r1 = std::min(H - 1, static_cast<int>(std::ceil(py + 4 * g.sigma)));
  const int c0 = std::max(0, static_cast<int>(std::floor(px - 4 * g.sigma)));
  const int c1 = std::min(W - 1, static_cast<int>(std::ceil(px + 4 * g.sigma)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double d2 = (c - px) * (c - px) + (r - py) * (r - py);
      frame[r * W + c] += static_cast<float>(std::exp(-d2 * inv2s2));
    }
}

}  // namespace

double gesture_angle(int cls, double theta0, double u) {
  switch (cls) {
    case 1: return theta0 + kTwoPi * u;             // full loop, one way
    case 2: return theta0 - kTwoPi * u;             // full loop, other way
    case 3: return theta0 + kTwoPi * tri(u);        // out and back
    case 4: return theta0 - kTwoPi * tri(u);        // out and back, mirrored
    case 5: return theta0 + kTwoPi * pendulum(u);   // narrow swings
    case 6: return theta0 - kTwoPi * pendulum(u);
    case 7: return theta0 + 2.0 * kTwoPi * u;       // double-speed loop
    case 8: return theta0 - 2.0 * kTwoPi * u;
    default:
      throw UsageError("gesture class " + std::to_string(cls) +
                       " out of range [1," + std::to_string(kMaxGestureClasses) + "]");
  }
}

Tensor<float> render_gesture_frame(const GeneratorConfig& cfg, int cls,
                                   double theta0, double u) {
  const RingGeometry g = RingGeometry::from(cfg);
  Tensor<float> frame(Shape{1, cfg.height, cfg.width});
  render_blob(frame.data(), cfg.height, cfg.width, g, gesture_angle(cls, theta0, u));
  for (int64_t i = 0; i < frame.size(); ++i)
    frame[i] = std::clamp(frame[i], 0.0f, 1.0f);
  return frame;
}

std::string GeneratorConfig::describe() const {
  std::string s;
  s += strfmt("frames=%d\n", frames);
  s += strfmt("height=%d\n", height);
  s += strfmt("width=%d\n", width);
  s += strfmt("ring_radius_frac=%g\n", ring_radius_frac);
  s += strfmt("sprite_sigma_frac=%g\n", sprite_sigma_frac);
  s += strfmt("noise_sigma=%g\n", noise_sigma);
  s += strfmt("noise_free=%d\n", noise_free ? 1 : 0);
  s += strfmt("gesture_frames=[%d,%d]\n", min_gesture, max_gesture);
  s += strfmt("silence_frames=[%d,%d]\n", min_gap, max_gap);
  return s;
}

void VideoSequence::validate() const {
  check_shape(frames.ndim() == 4, "sequence frames must be [T,C,H,W]");
  const int T = frames_count();
  if (static_cast<int>(labels.size()) != T)
    throw DataError(strfmt("sequence has %d frames but %d labels", T,
                           static_cast<int>(labels.size())));
  int prev_end = -1;
  for (const auto& a : annotations) {
    if (a.cls < 1 || a.start < 0 || a.end < a.start || a.end >= T)
      throw DataError("annotation out of range");
    if (a.start <= prev_end) throw DataError("annotations overlap");
    prev_end = a.end;
    for (int t = a.start; t <= a.end; ++t)
      if (labels[static_cast<size_t>(t)] != a.cls)
        throw DataError("annotated frames must carry the annotation class");
  }
}

Dataset gen_synthetic(int n_sequences, int n_classes, const GeneratorConfig& cfg,
                      uint64_t seed) {
  if (n_classes < 2)
    throw UsageError("gen_synthetic: need at least 2 gesture classes");
  if (n_classes > kMaxGestureClasses)
    throw UsageError(strfmt("gen_synthetic: at most %d gesture classes",
                            kMaxGestureClasses));
  if (n_sequences < 1) throw UsageError("gen_synthetic: need sequences");
  if (cfg.min_gesture < 2 || cfg.max_gesture < cfg.min_gesture ||
      cfg.min_gap < 1 || cfg.max_gap < cfg.min_gap)
    throw UsageError("gen_synthetic: bad duration ranges");
  const RingGeometry geom = RingGeometry::from(cfg);

  Dataset ds;
  ds.n_classes = n_classes;
  ds.provenance = strfmt("generator=ring-gestures\nsequences=%d\nclasses=%d\nseed=%llu\n",
                         n_sequences, n_classes,
                         static_cast<unsigned long long>(seed)) +
                  cfg.describe();
  Rng master(seed);
  for (int s = 0; s < n_sequences; ++s) {
    Rng rng = master.fork(static_cast<uint64_t>(s));
    VideoSequence seq;
    seq.frames = Tensor<float>(Shape{cfg.frames, 1, cfg.height, cfg.width});
    seq.labels.assign(static_cast<size_t>(cfg.frames), 0);
    const double theta0 = rng.uniform(0.0, kTwoPi);

    // angle of every frame; silence keeps the previous angle
    std::vector<double> theta(static_cast<size_t>(cfg.frames), theta0);
    int t = 0;
    bool in_gap = true;
    while (t < cfg.frames) {
      if (in_gap) {
        const int gap =
            cfg.min_gap + static_cast<int>(rng.uniform_int(cfg.max_gap - cfg.min_gap + 1));
        for (int i = 0; i < gap && t < cfg.frames; ++i, ++t)
          theta[static_cast<size_t>(t)] = theta0;
        in_gap = false;
        continue;
      }
      const int cls = 1 + static_cast<int>(rng.uniform_int(n_classes));
      const int dur = cfg.min_gesture +
                      static_cast<int>(rng.uniform_int(cfg.max_gesture - cfg.min_gesture + 1));
      if (t + dur > cfg.frames) break;  // no room: trailing silence
      for (int i = 0; i < dur; ++i) {
        const double u = dur > 1 ? static_cast<double>(i) / (dur - 1) : 0.0;
        theta[static_cast<size_t>(t + i)] = gesture_angle(cls, theta0, u);
        seq.labels[static_cast<size_t>(t + i)] = static_cast<uint16_t>(cls);
      }
      seq.annotations.push_back(GestureAnnotation{cls, t, t + dur - 1});
      t += dur;
      in_gap = true;
    }
    for (; t < cfg.frames; ++t) theta[static_cast<size_t>(t)] = theta0;

    float* base = seq.frames.data();
    const int64_t frame_sz = static_cast<int64_t>(cfg.height) * cfg.width;
    for (int f = 0; f < cfg.frames; ++f)
      render_blob(base + f * frame_sz, cfg.height, cfg.width, geom,
                  theta[static_cast<size_t>(f)]);
    if (!cfg.noise_free && cfg.noise_sigma > 0.0) {
      for (int64_t i = 0; i < seq.frames.size(); ++i)
        base[i] += static_cast<float>(rng.normal() * cfg.noise_sigma);
    }
    for (int64_t i = 0; i < seq.frames.size(); ++i)
      base[i] = std::clamp(base[i], 0.0f, 1.0f);
    seq.validate();
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

// ---- augmentation ----------------------------------------------------------

void AugmentParams::validate() const {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(dy, -5, 5) || !in(dx, -10, 10) || !in(rot_deg, -2, 2) ||
      !in(shear_deg, -2, 2) || !in(scale, 1.0 / 1.1, 1.1) ||
      !in(tscale, 1.0 / 1.2, 1.2))
    throw UsageError("augmentation parameters out of range");
}

AugmentParams sample_augment_params(Rng& rng) {
  AugmentParams p;
  p.dy = rng.uniform(-5.0, 5.0);
  p.dx = rng.uniform(-10.0, 10.0);
  p.rot_deg = rng.uniform(-2.0, 2.0);
  p.shear_deg = rng.uniform(-2.0, 2.0);
  p.scale = std::exp(rng.uniform(-std::log(1.1), std::log(1.1)));
  p.tscale = std::exp(rng.uniform(-std::log(1.2), std::log(1.2)));
  return p;
}

Tensor<float> apply_affine(const Tensor<float>& frames, const AugmentParams& p,
                           Interp interp) {
  p.validate();
  check_shape(frames.ndim() == 4, "apply_affine: expected [T,C,H,W]");
  const int T = frames.dim(0), C = frames.dim(1), H = frames.dim(2),
            W = frames.dim(3);
  const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
  const double th = p.rot_deg * std::numbers::pi / 180.0;
  const double sh = std::tan(p.shear_deg * std::numbers::pi / 180.0);
  // forward map about the center: rotate . shear . scale, then translate
  const double a00 = std::cos(th) * p.scale + (-std::sin(th)) * 0.0;
  const double a01 = std::cos(th) * sh * p.scale - std::sin(th) * p.scale;
  const double a10 = std::sin(th) * p.scale;
  const double a11 = std::sin(th) * sh * p.scale + std::cos(th) * p.scale;
  const double det = a00 * a11 - a01 * a10;
  check_shape(std::fabs(det) > 1e-12, "apply_affine: singular transform");
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;

  Tensor<float> out(frames.shape());
  const float* src = frames.data();
  float* dst = out.data();
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double ox = c - cx - p.dx;
      const double oy = r - cy - p.dy;
      const double sx = i00 * ox + i01 * oy + cx;
      const double sy = i10 * ox + i11 * oy + cy;
      const int64_t at = static_cast<int64_t>(r) * W + c;
      if (interp == Interp::nearest) {
        const long ri = std::lround(sy), ci = std::lround(sx);
        const bool inside = ri >= 0 && ri < H && ci >= 0 && ci < W;
        for (int64_t tc = 0; tc < static_cast<int64_t>(T) * C; ++tc)
          dst[tc * plane + at] =
              inside ? src[tc * plane + ri * W + ci] : 0.0f;
      } else {
        const double fx = std::floor(sx), fy = std::floor(sy);
        const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
        const double wx = sx - fx, wy = sy - fy;
        auto tap = [&](int64_t tc, int y, int x) -> double {
          if (y < 0 || y >= H || x < 0 || x >= W) return 0.0;
          return src[tc * plane + static_cast<int64_t>(y) * W + x];
        };
        for (int64_t tc = 0; tc < static_cast<int64_t>(T) * C; ++tc) {
          const double v =
              (1 - wy) * ((1 - wx) * tap(tc, y0, x0) + wx * tap(tc, y0, x0 + 1)) +
              wy * ((1 - wx) * tap(tc, y0 + 1, x0) + wx * tap(tc, y0 + 1, x0 + 1));
          dst[tc * plane + at] = static_cast<float>(v);
        }
      }
    }
  return out;
}

void resample_time(const Tensor<float>& frames, const std::vector<uint16_t>& labels,
                   int t_out, Tensor<float>* out_frames,
                   std::vector<uint16_t>* out_labels) {
  check_shape(frames.ndim() == 4, "resample_time: expected [T,C,H,W]");
  const int T = frames.dim(0);
  check_shape(T >= 1 && t_out >= 1, "resample_time: empty time axis");
  check_shape(static_cast<int>(labels.size()) == T, "resample_time: label count");
  Shape shape = frames.shape();
  shape[0] = t_out;
  *out_frames = Tensor<float>(shape);
  out_labels->assign(static_cast<size_t>(t_out), 0);
  const int64_t frame_sz = frames.size() / T;
  const float* src = frames.data();
  float* dst = out_frames->data();
  for (int j = 0; j < t_out; ++j) {
    const double x = (t_out > 1 && T > 1)
                         ? static_cast<double>(j) * (T - 1) / (t_out - 1)
                         : 0.0;
    const int i0 = std::min(static_cast<int>(std::floor(x)), T - 1);
    const int i1 = std::min(i0 + 1, T - 1);
    const double w = x - i0;
    const float* f0 = src + static_cast<int64_t>(i0) * frame_sz;
    const float* f1 = src + static_cast<int64_t>(i1) * frame_sz;
    float* o = dst + static_cast<int64_t>(j) * frame_sz;
    for (int64_t k = 0; k < frame_sz; ++k)
      o[k] = static_cast<float>((1.0 - w) * f0[k] + w * f1[k]);
    (*out_labels)[static_cast<size_t>(j)] =
        labels[static_cast<size_t>(std::lround(x))];
  }
}

// ---- fragments and windows ---------------------------------------------------

namespace {

Fragment slice_padded(const VideoSequence& seq, int start, int len) {
  const int T = seq.frames_count();
  Fragment f;
  Shape shape = seq.frames.shape();
  shape[0] = len;
  f.frames = Tensor<float>(shape);
  f.labels.assign(static_cast<size_t>(len), 0);
  f.padded = T < len;
  const int64_t frame_sz = seq.frames.size() / T;
  const float* src = seq.frames.data();
  float* dst = f.frames.data();
  for (int i = 0; i < len; ++i) {
    const int t = std::clamp(start + i, 0, T - 1);
    std::memcpy(dst + static_cast<int64_t>(i) * frame_sz,
                src + static_cast<int64_t>(t) * frame_sz,
                sizeof(float) * static_cast<size_t>(frame_sz));
    f.labels[static_cast<size_t>(i)] = seq.labels[static_cast<size_t>(t)];
  }
  return f;
}

}  // namespace

Fragment sample_fragment(const VideoSequence& seq, Rng& rng, int len) {
  const int T = seq.frames_count();
  const int start =
      T >= len ? static_cast<int>(rng.uniform_int(T - len + 1)) : 0;
  return slice_padded(seq, start, len);
}

Fragment fragment_at(const VideoSequence& seq, int start, int len) {
  const int T = seq.frames_count();
  start = std::clamp(start, 0, std::max(0, T - len));
  return slice_padded(seq, start, len);
}

Fragment sample_augmented_fragment(const VideoSequence& seq, Rng& rng,
                                   const AugmentParams& p, int len, Interp interp) {
  p.validate();
  const int src_len = std::max(2, static_cast<int>(std::lround(len * p.tscale)));
  const int T = seq.frames_count();
  const int start =
      T >= src_len ? static_cast<int>(rng.uniform_int(T - src_len + 1)) : 0;
  Fragment raw = slice_padded(seq, start, src_len);
  Fragment out;
  out.padded = raw.padded;
  resample_time(raw.frames, raw.labels, len, &out.frames, &out.labels);
  out.frames = apply_affine(out.frames, p, interp);
  return out;
}

Tensor<float> window_at(const VideoSequence& seq, int center, int w) {
  check_shape(w >= 1, "window_at: empty window");
  const int T = seq.frames_count();
  check_shape(center >= 0 && center < T, "window_at: center outside sequence");
  Shape shape = seq.frames.shape();
  shape[0] = w;
  Tensor<float> out(shape);
  const int64_t frame_sz = seq.frames.size() / T;
  const float* src = seq.frames.data();
  float* dst = out.data();
  for (int j = 0; j < w; ++j) {
    const int t = std::clamp(center - w / 2 + j, 0, T - 1);
    std::memcpy(dst + static_cast<int64_t>(j) * frame_sz,
                src + static_cast<int64_t>(t) * frame_sz,
                sizeof(float) * static_cast<size_t>(frame_sz));
  }
  return out;
}

// ---- container format ----------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'F', 'W', 'G', 'D'};
constexpr uint16_t kContainerVersion = 1;
}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_u16(os, kContainerVersion);
  write_u16(os, static_cast<uint16_t>(ds.n_classes));
  write_u32(os, static_cast<uint32_t>(ds.sequences.size()));
  write_string(os, ds.provenance);
  for (const auto& seq : ds.sequences) {
    seq.validate();
    write_u32(os, static_cast<uint32_t>(seq.frames_count()));
    write_u32(os, static_cast<uint32_t>(seq.height()));
    write_u32(os, static_cast<uint32_t>(seq.width()));
    write_u32(os, static_cast<uint32_t>(seq.channels()));
    write_u32(os, static_cast<uint32_t>(seq.annotations.size()));
    for (int64_t i = 0; i < seq.frames.size(); ++i) write_f32(os, seq.frames[i]);
    for (uint16_t l : seq.labels) write_u16(os, l);
    for (const auto& a : seq.annotations) {
      write_u16(os, static_cast<uint16_t>(a.cls));
      write_u32(os, static_cast<uint32_t>(a.start));
      write_u32(os, static_cast<uint32_t>(a.end));
    }
  }
  if (!os) throw DataError("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError(path + ": not a dataset container (bad magic)");
  const uint16_t version = read_u16(is);
  if (version != kContainerVersion)
    throw DataError(strfmt("%s: unsupported container version %u", path.c_str(),
                           version));
  Dataset ds;
  ds.n_classes = read_u16(is);
  const uint32_t n_seq = read_u32(is);
  ds.provenance = read_string(is);
  ds.sequences.reserve(n_seq);
  for (uint32_t s = 0; s < n_seq; ++s) {
    const uint32_t T = read_u32(is), H = read_u32(is), W = read_u32(is),
                   C = read_u32(is), n_ann = read_u32(is);
    if (T == 0 || H == 0 || W == 0 || C == 0 || T > (1u << 24) ||
        static_cast<uint64_t>(T) * C * H * W > (1ull << 32))
      throw DataError(path + ": implausible sequence header");
    VideoSequence seq;
    seq.frames = Tensor<float>(Shape{static_cast<int>(T), static_cast<int>(C),
                                     static_cast<int>(H), static_cast<int>(W)});
    for (int64_t i = 0; i < seq.frames.size(); ++i) seq.frames[i] = read_f32(is);
    seq.labels.resize(T);
    for (auto& l : seq.labels) l = read_u16(is);
    seq.annotations.resize(n_ann);
    for (auto& a : seq.annotations) {
      a.cls = read_u16(is);
      a.start = static_cast<int>(read_u32(is));
      a.end = static_cast<int>(read_u32(is));
    }
    if (!is) throw DataError(path + ": truncated sequence payload");
    seq.validate();
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

std::string class_histogram(const Dataset& ds) {
  std::vector<int64_t> counts(static_cast<size_t>(ds.n_classes) + 1, 0);
  for (const auto& seq : ds.sequences)
    for (uint16_t l : seq.labels) {
      if (l >= counts.size()) counts.resize(l + 1, 0);
      ++counts[l];
    }
  std::string out;
  for (size_t c = 0; c < counts.size(); ++c)
    out += strfmt("class_%zu=%lld\n", c, static_cast<long long>(counts[c]));
  return out;
}

}  // namespace fwg
