#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "splitzip/error.hpp"

namespace splitzip {

// Streams of fixed-width symbols are dense little-endian bit streams: bit j of
// symbol i lands at stream bit i*width + j, stream bit b lives in byte b/8 at
// position b%8. For width 4 this puts even elements in the low nibble.

constexpr std::size_t packed_size(std::uint64_t count, unsigned width) noexcept {
  return static_cast<std::size_t>((count * width + 7) / 8);
}

namespace detail {

/// Writes `symbols` into `out`, starting at a byte boundary. `out` must hold
/// exactly packed_size(symbols.size(), width) bytes and may be uninitialised.
template <class Symbols>
void pack_into(const Symbols& symbols, unsigned width, std::span<std::uint8_t> out) {
  std::uint32_t acc = 0;
  unsigned filled = 0;
  std::size_t pos = 0;
  for (auto s : symbols) {
    acc |= static_cast<std::uint32_t>(s) << filled;
    filled += width;
    while (filled >= 8) {
      out[pos++] = static_cast<std::uint8_t>(acc);
      acc >>= 8;
      filled -= 8;
    }
  }
  if (filled > 0) out[pos++] = static_cast<std::uint8_t>(acc);
}

inline void check_width(unsigned width) {
  if (width < 1 || width > 8) fail(ErrorKind::RejectedInput, "symbol width must be 1..8 bits");
}

}  // namespace detail

/// Packs symbols of `width` bits (1..8) into bytes; unused trailing bits are zero.
inline std::vector<std::uint8_t> pack_codes(std::span<const std::uint8_t> codes, unsigned width) {
  detail::check_width(width);
  const unsigned limit = 1u << width;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] >= limit) {
      fail(ErrorKind::RejectedInput, "symbol " + std::to_string(i) + " does not fit in " +
                                         std::to_string(width) + " bits");
    }
  }
  std::vector<std::uint8_t> out(packed_size(codes.size(), width));
  detail::pack_into(codes, width, out);
  return out;
}

/// Reads `count` symbols back. Trailing padding bits are ignored.
inline std::vector<std::uint8_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count,
                                              unsigned width) {
  detail::check_width(width);
  if (bytes.size() != packed_size(count, width)) {
    fail(ErrorKind::MalformedStream, "packed stream holds " + std::to_string(bytes.size()) +
                                         " bytes, expected " +
                                         std::to_string(packed_size(count, width)));
  }
  std::vector<std::uint8_t> out(count);
  const std::uint32_t mask = (1u << width) - 1;
  std::uint32_t acc = 0;
  unsigned avail = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    while (avail < width) {
      acc |= static_cast<std::uint32_t>(bytes[pos++]) << avail;
      avail += 8;
    }
    out[i] = static_cast<std::uint8_t>(acc & mask);
    acc >>= width;
    avail -= width;
  }
  return out;
}

/// True when the bits after the last symbol in the final byte are all zero.
inline bool padding_is_zero(std::span<const std::uint8_t> bytes, std::size_t count, unsigned width) {
  const unsigned used = static_cast<unsigned>((count * width) % 8);
  if (used == 0 || bytes.empty()) return true;
  return (bytes.back() >> used) == 0;
}

}  // namespace splitzip
