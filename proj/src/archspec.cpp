// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#include "fwg/archspec.hpp"

#include <algorithm>
#include <cctype>

namespace fwg {

namespace {

struct TagInfo {
  ArchTag tag;
  const char* name;
  int arity;
};

constexpr TagInfo kTags[] = {
    // longer names first so MP3/TPOOL win over single letters
    {ArchTag::TPOOL, "TPOOL", 1}, {ArchTag::MP3, "MP3", 0},
    {ArchTag::C, "C", 1},         {ArchTag::T, "T", 2},
    {ArchTag::P, "P", 0},         {ArchTag::D, "D", 1},
    {ArchTag::S, "S", 0},         {ArchTag::R, "R", 1},
    {ArchTag::L, "L", 1},
};

const TagInfo* tag_info(ArchTag tag) {
  for (const auto& ti : kTags)
    if (ti.tag == tag) return &ti;
  return nullptr;
}

[[noreturn]] void fail(int pos, const std::string& msg) {
  throw ParseError("term " + std::to_string(pos) + ": " + msg);
}

ArchTerm parse_term(const std::string& term, int pos) {
  const TagInfo* info = nullptr;
  for (const auto& ti : kTags) {
    size_t n = std::string(ti.name).size();
    if (term.compare(0, n, ti.name) == 0 &&
        (term.size() == n || term[n] == '(')) {
      info = &ti;
      break;
    }
  }
  if (!info) fail(pos, "unknown tag '" + term + "'");

  ArchTerm out;
  out.tag = info->tag;
  std::string rest = term.substr(std::string(info->name).size());
  if (rest.empty()) {
    if (info->arity != 0)
      fail(pos, std::string(info->name) + " needs " +
                    std::to_string(info->arity) + " argument(s)");
    return out;
  }
  if (rest.front() != '(' || rest.back() != ')')
    fail(pos, "malformed arguments in '" + term + "'");
  rest = rest.substr(1, rest.size() - 2);

  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t comma = rest.find(',', start);
    parts.push_back(rest.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.tag == ArchTag::TPOOL) {
    if (parts.size() != 1) fail(pos, "TPOOL takes one mode argument");
    if (parts[0] == "mean")
      out.pool_mode = TPoolMode::mean;
    else if (parts[0] == "max")
      out.pool_mode = TPoolMode::max;
    else
      fail(pos, "TPOOL mode must be mean or max, got '" + parts[0] + "'");
    return out;
  }
  if (static_cast<int>(parts.size()) != info->arity)
    fail(pos, std::string(info->name) + " needs " +
                  std::to_string(info->arity) + " argument(s), got " +
                  std::to_string(parts.size()));
  for (const auto& p : parts) {
    if (p.empty() || !std::all_of(p.begin(), p.end(),
                                  [](unsigned char c) { return std::isdigit(c); }))
      fail(pos, "argument '" + p + "' is not a positive integer");
    long v = std::stol(p);
    if (v < 1 || v > 1'000'000) fail(pos, "argument " + p + " out of range");
    out.args.push_back(static_cast<int>(v));
  }
  return out;
}

void validate(const std::vector<ArchTerm>& terms) {
  int n_s = 0, n_temporal = 0;
  for (const auto& t : terms) {
    if (t.tag == ArchTag::S) ++n_s;
    if (t.tag == ArchTag::TPOOL || t.tag == ArchTag::R || t.tag == ArchTag::L)
      ++n_temporal;
  }
  if (n_s != 1 || terms.back().tag != ArchTag::S)
    throw ParseError("spec needs exactly one S term, in final position");
  if (n_temporal > 1)
    throw ParseError("at most one of TPOOL, R, L is allowed");

  // conv stage before dense stage; TPOOL immediately before the first D;
  // R/L immediately before S
  bool seen_dense = false;
  for (size_t i = 0; i < terms.size(); ++i) {
    ArchTag tag = terms[i].tag;
    if (tag == ArchTag::D) seen_dense = true;
    if (seen_dense && (tag == ArchTag::C || tag == ArchTag::T ||
                       tag == ArchTag::P || tag == ArchTag::MP3))
      throw ParseError("term " + std::to_string(i + 1) +
                       ": conv-stage term after a fully connected layer");
    if (tag == ArchTag::TPOOL) {
      if (i + 1 >= terms.size() || (terms[i + 1].tag != ArchTag::D &&
                                    terms[i + 1].tag != ArchTag::S))
        throw ParseError("TPOOL must sit directly before the first fully "
                         "connected layer");
    }
    if ((tag == ArchTag::R || tag == ArchTag::L) && terms[i + 1].tag != ArchTag::S)
      throw ParseError("recurrent layer must sit directly before S");
  }
  // retained time axis: MP3 cannot be combined with a recurrent layer
  bool has_mp3 = false, has_rec = false;
  for (const auto& t : terms) {
    if (t.tag == ArchTag::MP3) has_mp3 = true;
    if (t.tag == ArchTag::R || t.tag == ArchTag::L) has_rec = true;
  }
  if (has_mp3 && has_rec)
    throw ParseError("MP3 reduces the time axis and cannot feed a recurrent "
                     "layer; use P instead");
}

}  // namespace

ArchSpec parse_arch(const std::string& text) {
  std::string compact;
  compact.reserve(text.size());
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
  if (compact.empty()) throw ParseError("empty architecture string");

  ArchSpec spec;
  size_t start = 0;
  int pos = 1;
  while (true) {
    size_t dash = compact.find('-', start);
    std::string term = compact.substr(start, dash - start);
    if (term.empty()) fail(pos, "empty term");
    spec.terms.push_back(parse_term(term, pos));
    if (dash == std::string::npos) break;
    start = dash + 1;
    ++pos;
  }
  validate(spec.terms);
  return spec;
}

std::string render_arch(const ArchSpec& spec) {
  std::string out;
  for (size_t i = 0; i < spec.terms.size(); ++i) {
    const ArchTerm& t = spec.terms[i];
    if (i) out += "-";
    out += tag_name(t.tag);
    if (t.tag == ArchTag::TPOOL) {
      out += t.pool_mode == TPoolMode::mean ? "(mean)" : "(max)";
    } else if (!t.args.empty()) {
      out += "(";
      for (size_t a = 0; a < t.args.size(); ++a) {
        if (a) out += ",";
        out += std::to_string(t.args[a]);
      }
      out += ")";
    }
  }
  return out;
}

const char* tag_name(ArchTag tag) { return tag_info(tag)->name; }

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::single: return "single";
    case Variant::tpool: return "tpool";
    case Variant::tconv: return "tconv";
    case Variant::rnn: return "rnn";
    case Variant::lstm: return "lstm";
    case Variant::tconv_lstm: return "tconv_lstm";
  }
  return "?";
}

std::optional<Variant> variant_from_name(const std::string& name) {
  for (Variant v : {Variant::single, Variant::tpool, Variant::tconv,
                    Variant::rnn, Variant::lstm, Variant::tconv_lstm})
    if (name == variant_name(v)) return v;
  return std::nullopt;
}

Variant infer_variant(const ArchSpec& spec) {
  const bool temporal_conv = spec.has(ArchTag::T);
  if (spec.has(ArchTag::L)) return temporal_conv ? Variant::tconv_lstm : Variant::lstm;
  if (spec.has(ArchTag::R)) return Variant::rnn;
  if (spec.has(ArchTag::TPOOL)) return Variant::tpool;
  if (temporal_conv || spec.has(ArchTag::MP3)) return Variant::tconv;
  return Variant::single;
}

namespace {

std::string conv_stack(const std::vector<int>& maps) {
  std::string s;
  for (int m : maps) {
    s += "C(" + std::to_string(m) + ")-C(" + std::to_string(m) + ")-P-";
  }
  return s;
}

std::string tconv_stack(const std::vector<int>& maps, const char* pool) {
  std::string s;
  for (int m : maps) {
    std::string c = "C(" + std::to_string(m) + ")";
    std::string t = "T(" + std::to_string(m) + ",3)";
    s += c + "-" + t + "-" + c + "-" + t + "-" + pool + "-";
  }
  return s;
}

BuiltinSpec make_builtin(std::string name, const std::string& text,
                         Variant variant, InputSignature input, int window) {
  ArchSpec spec = parse_arch(text);
  spec.input = input;
  Variant inferred = infer_variant(spec);
  if (inferred != variant)
    throw UsageError("builtin " + name + " renders as variant " +
                     variant_name(inferred));
  return BuiltinSpec{std::move(name), std::move(spec), variant, window};
}

std::vector<BuiltinSpec> build_builtins() {
  const std::vector<int> maps_full = {16, 32, 64, 128};
  // Desk twins shrink the conv maps and dense/recurrent units and keep only
  // as many conv stages as leave the full-scale 4x4 grid in front of the
  // classifier: two pooling steps take 16x16 inputs to 4x4. Deeper twins
  // (three or four stages) pool the 16x16 input down to 2x2 or 1x1, which
  // erases the spatial structure temporal feature pooling depends on.
  const std::vector<int> maps_desk = {4, 8};
  const std::string dense_full = "D(2048)-D(2048)";
  const std::string dense_desk = "D(64)-D(64)";

  // full scale: 4 channels at 64x64; desk twin: 1 channel at 16x16.
  // frames = fragment length (recurrent), window (tconv/tpool) or 1 (single).
  auto full = [](int frames) { return InputSignature{4, frames, 64, 64}; };
  auto desk = [](int frames) { return InputSignature{1, frames, 16, 16}; };

  std::vector<BuiltinSpec> v;
  auto add_pair = [&](const std::string& base, const std::string& full_text,
                      const std::string& desk_text, Variant var, int frames,
                      int window) {
    v.push_back(make_builtin(base + "_paper", full_text, var, full(frames), window));
    v.push_back(make_builtin(base + "_desk", desk_text, var, desk(frames), window));
  };

  add_pair("single", conv_stack(maps_full) + dense_full + "-S",
           conv_stack(maps_desk) + dense_desk + "-S", Variant::single, 1, 1);
  add_pair("tpool_mean",
           conv_stack(maps_full) + "TPOOL(mean)-" + dense_full + "-S",
           conv_stack(maps_desk) + "TPOOL(mean)-" + dense_desk + "-S",
           Variant::tpool, 32, 32);
  add_pair("tpool_max",
           conv_stack(maps_full) + "TPOOL(max)-" + dense_full + "-S",
           conv_stack(maps_desk) + "TPOOL(max)-" + dense_desk + "-S",
           Variant::tpool, 16, 16);
  add_pair("tconv", tconv_stack(maps_full, "MP3") + dense_full + "-S",
           tconv_stack(maps_desk, "MP3") + dense_desk + "-S", Variant::tconv,
           32, 32);
  add_pair("rnn_std", conv_stack(maps_full) + dense_full + "-R(2048)-S",
           conv_stack(maps_desk) + dense_desk + "-R(128)-S", Variant::rnn, 64, 0);
  add_pair("rnn_lstm", conv_stack(maps_full) + dense_full + "-L(512)-S",
           conv_stack(maps_desk) + dense_desk + "-L(64)-S", Variant::lstm, 64, 0);
  add_pair("tconv_lstm", tconv_stack(maps_full, "P") + "L(512)-S",
           tconv_stack(maps_desk, "P") + "L(64)-S", Variant::tconv_lstm, 64, 0);
  return v;
}

}  // namespace

const std::vector<BuiltinSpec>& builtin_specs() {
  static const std::vector<BuiltinSpec> specs = build_builtins();
  return specs;
}

const BuiltinSpec* find_builtin(const std::string& name) {
  for (const auto& b : builtin_specs())
    if (b.name == name) return &b;
  return nullptr;
}

std::string builtin_names_joined() {
  std::string out;
  for (const auto& b : builtin_specs()) {
    if (!out.empty()) out += ", ";
    out += b.name;
  }
  return out;
}

}  // namespace fwg
