// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fwg {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Dense extents, outermost first. At most 5 axes are used anywhere.
using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// --- little-endian binary i/o -------------------------------------------
// File formats are pinned little-endian; encode bytes explicitly so the
// containers stay valid off x86 as well.

inline void write_u8(std::ostream& os, uint8_t v) {
  os.put(static_cast<char>(v));
}
inline void write_u16(std::ostream& os, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
inline void write_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
inline void write_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}
inline void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  __builtin_memcpy(&bits, &v, 4);
  write_u32(os, bits);
}
inline void write_f64(std::ostream& os, double v) {
  uint64_t bits;
  __builtin_memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

inline uint8_t read_u8(std::istream& is) {
  int c = is.get();
  if (c < 0) throw DataError("unexpected end of file");
  return static_cast<uint8_t>(c);
}
inline uint16_t read_u16(std::istream& is) {
  uint16_t lo = read_u8(is), hi = read_u8(is);
  return static_cast<uint16_t>(lo | (hi << 8));
}
inline uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(read_u8(is)) << (8 * i);
  return v;
}
inline uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(read_u8(is)) << (8 * i);
  return v;
}
inline float read_f32(std::istream& is) {
  uint32_t bits = read_u32(is);
  float v;
  __builtin_memcpy(&v, &bits, 4);
  return v;
}
inline double read_f64(std::istream& is) {
  uint64_t bits = read_u64(is);
  double v;
  __builtin_memcpy(&v, &bits, 8);
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& is) {
  uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (static_cast<uint32_t>(is.gcount()) != n)
    throw DataError("unexpected end of file in string field");
  return s;
}

// printf-style formatting helper (std::format is unavailable on gcc 11)
inline std::string strfmt(const char* fmt, ...)
    __attribute__((format(printf, 1, 2)));
inline std::string strfmt(const char* fmt, ...) {
  char buf[512];
  va_list args;
  va_start(args, fmt);
  vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

}  // namespace fwg
