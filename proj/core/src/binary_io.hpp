#pragma once

// Little-endian primitives for the binary container formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kgtn/checkpoint.hpp"

namespace kgtn::detail {

inline void write_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

inline void write_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t read_le(std::istream& in, int bytes, const std::string& what) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw FormatError("truncated file while reading " + what);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

inline std::uint8_t read_u8(std::istream& in, const std::string& what) {
  return static_cast<std::uint8_t>(read_le(in, 1, what));
}
inline std::uint32_t read_u32(std::istream& in, const std::string& what) {
  return static_cast<std::uint32_t>(read_le(in, 4, what));
}
inline double read_f64(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(read_le(in, 8, what));
}

}  // namespace kgtn::detail
