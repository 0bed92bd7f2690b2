// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shorthand architecture notation.
//
//   C(n)      spatial 3x3 conv layer with n feature maps (no bias)
//   T(n,l)    temporal conv layer, n maps, kernel length l (bias + leaky ReLU)
//   P         2x2 spatial max-pooling
//   MP3       2x2x2 spatiotemporal max-pooling
//   TPOOL(m)  temporal feature pooling across all frames, m in {mean,max}
//   D(n)      fully connected layer with n units (dropout on input)
//   R(n)      bidirectional recurrent layer, standard cells, n units
//   L(n)      bidirectional recurrent layer, peephole LSTM cells, n units
//   S         softmax classifier (always last)
//
// Terms are joined with '-'; whitespace is ignored. A spec holds exactly one
// S, at most one of {TPOOL, R, L}, and the conv stage must precede the dense
// stage.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fwg/common.hpp"

namespace fwg {

enum class ArchTag { C, T, P, MP3, TPOOL, D, S, R, L };
enum class TPoolMode { mean, max };
enum class Variant { single, tpool, tconv, rnn, lstm, tconv_lstm };

struct ArchTerm {
  ArchTag tag;
  std::vector<int> args;                // arity fixed per tag
  TPoolMode pool_mode = TPoolMode::mean;  // TPOOL only

  bool operator==(const ArchTerm& o) const {
    return tag == o.tag && args == o.args &&
           (tag != ArchTag::TPOOL || pool_mode == o.pool_mode);
  }
};

struct InputSignature {
  int channels = 0;
  int frames = 0;
  int height = 0;
  int width = 0;
  bool operator==(const InputSignature&) const = default;
};

struct ArchSpec {
  std::vector<ArchTerm> terms;
  InputSignature input;  // carried metadata, not part of the rendered string

  bool has(ArchTag tag) const {
    for (const auto& t : terms)
      if (t.tag == tag) return true;
    return false;
  }
  const ArchTerm* find(ArchTag tag) const {
    for (const auto& t : terms)
      if (t.tag == tag) return &t;
    return nullptr;
  }
  // equality is over the term list; the input signature is advisory
  bool operator==(const ArchSpec& o) const { return terms == o.terms; }
};

// Parses the shorthand notation; throws ParseError with the 1-based term
// position on bad input.
ArchSpec parse_arch(const std::string& text);

std::string render_arch(const ArchSpec& spec);

const char* tag_name(ArchTag tag);
const char* variant_name(Variant v);
std::optional<Variant> variant_from_name(const std::string& name);

// The variant a spec's terms imply.
Variant infer_variant(const ArchSpec& spec);

// A named ready-to-build configuration: the spec itself, its variant and the
// sliding-window width used at evaluation time (0 = stitched full-sequence
// evaluation for recurrent variants, 1 = frame by frame).
struct BuiltinSpec {
  std::string name;
  ArchSpec spec;
  Variant variant;
  int eval_window;
};

// Full-scale architectures plus "_desk" twins shrunk for CPU-scale runs
// (conv maps /4, dense units /32, LSTM units /8, standard-cell units /16).
const std::vector<BuiltinSpec>& builtin_specs();
const BuiltinSpec* find_builtin(const std::string& name);
std::string builtin_names_joined();

}  // namespace fwg
