#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "splitzip/splitzip.hpp"

namespace splitzip::testing {

// Field extraction one bit at a time, independent of the shift-and-mask code.
struct BitOracle {
  static unsigned bit(unsigned word, unsigned i) { return (word >> i) & 1u; }

  static unsigned exponent(unsigned word, ElementFormat fmt) {
    const auto f = info(fmt);
    unsigned e = 0;
    for (unsigned i = 0; i < f.exp_bits; ++i) e |= bit(word, f.mant_bits() + i) << i;
    return e;
  }

  // Sign goes to the top of the sign-mantissa unit, mantissa below it.
  static unsigned sign_mantissa(unsigned word, ElementFormat fmt) {
    const auto f = info(fmt);
    unsigned a = 0;
    for (unsigned i = 0; i < f.mant_bits(); ++i) a |= bit(word, i) << i;
    a |= bit(word, f.word_bits - 1) << (f.sm_bits - 1);
    return a;
  }
};

inline RawTensorStream random_stream(ElementFormat fmt, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RawTensorStream s{fmt, std::vector<std::uint16_t>(n)};
  const unsigned mask = info(fmt).word_bits == 16 ? 0xFFFFu : 0xFFu;
  for (auto& w : s.words) w = static_cast<std::uint16_t>(rng() & mask);
  return s;
}

// Stream drawn from the default synthetic profile; escapes are a small
// fraction so every layout gets a realistic mix.
inline RawTensorStream profile_stream(ElementFormat fmt, std::size_t n, double rate, std::uint64_t seed,
                                      bool exact = false) {
  auto spec = default_spec(fmt, n, rate, seed);
  spec.exact_counts = exact;
  return generate(spec);
}

inline CodecConfig make_config(ElementFormat fmt, unsigned code_bits, CodebookMode mode, std::uint32_t chunk,
                               PositionMode pos, unsigned threads = 1) {
  CodecConfig c;
  c.fmt = fmt;
  c.code_bits = code_bits;
  c.mode = mode;
  c.chunk_size = chunk;
  c.position_mode = pos;
  c.threads = threads;
  return c;
}

inline std::uint8_t symbol_code(const EncodedStreams& s, std::uint64_t i) {
  return splitzip::detail::symbol_at(s.packed_codes, i, s.layout.code_bits);
}

inline std::string describe_layout(const CodecConfig& c) {
  return std::string(name(c.fmt)) + " bits=" + std::to_string(c.code_bits) + " " + std::string(name(c.mode)) +
         " chunk=" + std::to_string(c.chunk_size) + " " + std::string(name(c.position_mode));
}

enum class Outcome { ClassifiedError, VerifyFailure, Success };

// Parses and decodes damaged container bytes; anything other than a typed
// error or a detected mismatch counts as silent success.
inline Outcome classify_damaged(const RawTensorStream& original, std::span<const std::uint8_t> bytes) {
  try {
    const auto decoded = decode(parse_container(bytes));
    return decoded == original ? Outcome::Success : Outcome::VerifyFailure;
  } catch (const Error&) {
    return Outcome::ClassifiedError;
  }
}

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

}  // namespace splitzip::testing
