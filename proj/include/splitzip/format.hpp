#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "splitzip/error.hpp"

namespace splitzip {

enum class ElementFormat : std::uint8_t { BF16 = 0, FP8_E5M2 = 1, FP8_E4M3 = 2 };

struct FormatInfo {
  unsigned word_bits;
  unsigned exp_bits;
  unsigned sm_bits;  // sign bit + mantissa bits

  constexpr unsigned mant_bits() const noexcept { return sm_bits - 1; }
  constexpr unsigned word_bytes() const noexcept { return word_bits / 8; }
  constexpr unsigned exp_values() const noexcept { return 1u << exp_bits; }
};

constexpr FormatInfo info(ElementFormat fmt) noexcept {
  switch (fmt) {
    case ElementFormat::BF16: return {16, 8, 8};
    case ElementFormat::FP8_E5M2: return {8, 5, 3};
    case ElementFormat::FP8_E4M3: return {8, 4, 4};
  }
  return {16, 8, 8};
}

static_assert(info(ElementFormat::BF16).exp_bits + info(ElementFormat::BF16).sm_bits == 16);
static_assert(info(ElementFormat::FP8_E5M2).exp_bits + info(ElementFormat::FP8_E5M2).sm_bits == 8);
static_assert(info(ElementFormat::FP8_E4M3).exp_bits + info(ElementFormat::FP8_E4M3).sm_bits == 8);

inline constexpr std::array<ElementFormat, 3> kAllFormats = {
    ElementFormat::BF16, ElementFormat::FP8_E5M2, ElementFormat::FP8_E4M3};

constexpr std::string_view name(ElementFormat fmt) noexcept {
  switch (fmt) {
    case ElementFormat::BF16: return "bf16";
    case ElementFormat::FP8_E5M2: return "e5m2";
    case ElementFormat::FP8_E4M3: return "e4m3";
  }
  return "?";
}

inline std::optional<ElementFormat> parse_format(std::string_view text) {
  for (auto fmt : kAllFormats) {
    if (name(fmt) == text) return fmt;
  }
  return std::nullopt;
}

inline ElementFormat format_from_byte(std::uint8_t b) {
  if (b > 2) fail(ErrorKind::MalformedStream, "unknown element format byte " + std::to_string(b));
  return static_cast<ElementFormat>(b);
}

/// Exponent and sign-mantissa unit of one element word. The sign bit sits
/// directly above the mantissa in the sign-mantissa unit for every format.
struct SplitFields {
  std::uint8_t exponent = 0;
  std::uint8_t sign_mantissa = 0;

  friend constexpr bool operator==(const SplitFields&, const SplitFields&) = default;
};

constexpr SplitFields split_fields(std::uint16_t word, ElementFormat fmt) noexcept {
  const FormatInfo f = info(fmt);
  const unsigned mant = f.mant_bits();
  const unsigned mant_mask = (1u << mant) - 1;
  const unsigned exp_mask = f.exp_values() - 1;
  const unsigned sign = (word >> (f.word_bits - 1)) & 1u;
  return {static_cast<std::uint8_t>((word >> mant) & exp_mask),
          static_cast<std::uint8_t>((sign << mant) | (word & mant_mask))};
}

constexpr std::uint16_t reconstruct(SplitFields fields, ElementFormat fmt) noexcept {
  const FormatInfo f = info(fmt);
  const unsigned mant = f.mant_bits();
  const unsigned mant_mask = (1u << mant) - 1;
  const unsigned sign = (fields.sign_mantissa >> mant) & 1u;
  return static_cast<std::uint16_t>((sign << (f.word_bits - 1)) |
                                    (unsigned{fields.exponent} << mant) |
                                    (fields.sign_mantissa & mant_mask));
}

static_assert(split_fields(0x3F80, ElementFormat::BF16) == SplitFields{0x7F, 0x00});
static_assert(reconstruct({0x7F, 0x80}, ElementFormat::BF16) == 0xBF80);

}  // namespace splitzip
